"""Simulator for compact coding: bits carried jointly by the intensity,
time delay and relative phase of coherent pulse pairs, sent through the
three-stage and single-stage multi-photon protocols."""

from .codec import (
    CodecParams,
    CompactSymbol,
    Decoder,
    bits_to_symbol,
    decode,
    encode_symbol,
    intensity_thresholds,
    symbol_to_bits,
)
from .channel import Channel, ChannelParams, EveConfig, EveModel
from .protocols import ProtocolConfig, run_iv_check, run_single_stage, run_three_stage
from .pulse import DetectMode, PulseTrain, TimeGrid
from .transforms import SecretTransform, TransformPolicy

__version__ = "0.1.0"
