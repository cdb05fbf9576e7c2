"""Channel impairments and eavesdropper models for one traversal."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .codec import CodecParams, Decoder, encode_symbol
from .pulse import (
    DetectMode,
    PulseTrain,
    TimeGrid,
    Window,
    attenuate,
    total_mean_photons,
)


@dataclass(frozen=True)
class ChannelParams:
    """Per-traversal impairments.

    Attributes:
        eta: power transmittance.
        phase_drift_sigma: std of the common phase picked up by both pulses (rad).
        phase_drift_sigma_rel: std of the extra phase on the S window only (rad).
        jitter_prob: probability that the late pulse slips by one bin.
        dark_rate: mean dark counts per bin per detector at the receiver.
    """

    eta: float = 1.0
    phase_drift_sigma: float = 0.0
    phase_drift_sigma_rel: float = 0.0
    jitter_prob: float = 0.0
    dark_rate: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta={self.eta} outside [0, 1]")
        if self.phase_drift_sigma < 0 or self.phase_drift_sigma_rel < 0:
            raise ValueError("phase drift sigmas must be non-negative")
        if not 0.0 <= self.jitter_prob <= 1.0:
            raise ValueError(f"jitter_prob={self.jitter_prob} outside [0, 1]")
        if self.dark_rate < 0:
            raise ValueError("dark_rate must be non-negative")

    @property
    def is_identity(self) -> bool:
        return (
            self.eta == 1.0
            and self.phase_drift_sigma == 0.0
            and self.phase_drift_sigma_rel == 0.0
            and self.jitter_prob == 0.0
        )


class EveModel(str, enum.Enum):
    NONE = "none"
    INTERCEPT_RESEND = "intercept_resend"
    BEAM_TAP = "beam_tap"


@dataclass(frozen=True)
class EveConfig:
    model: EveModel = EveModel.NONE
    tap_ratio: float = 0.5
    stages: tuple[int, ...] = (1, 2, 3)

    def __post_init__(self):
        object.__setattr__(self, "model", EveModel(self.model))
        object.__setattr__(self, "stages", tuple(int(s) for s in self.stages))
        if not 0.0 <= self.tap_ratio < 1.0:
            raise ValueError(f"tap_ratio={self.tap_ratio} must lie in [0, 1)")
        if any(s not in (1, 2, 3) for s in self.stages):
            raise ValueError(f"stages {self.stages} must be drawn from {{1, 2, 3}}")


def _jitter(train: PulseTrain, step: int) -> PulseTrain:
    s = train.grid.window(Window.S)
    amp = train.amp.copy()
    seg = amp[s].copy()
    amp[s] = 0
    idx = np.clip(np.arange(seg.shape[0]) + step, 0, seg.shape[0] - 1) + s.start
    np.add.at(amp, idx, seg)
    return PulseTrain(train.grid, amp)


def transmit(train: PulseTrain, params: ChannelParams, rng: np.random.Generator | None) -> PulseTrain:
    """Loss, then common and differential phase drift, then late-pulse jitter."""
    if params.is_identity:
        return train
    x = attenuate(train, params.eta)
    if params.phase_drift_sigma or params.phase_drift_sigma_rel or params.jitter_prob:
        if rng is None:
            raise ValueError("a random generator is required for a noisy channel")
    amp = x.amp
    if params.phase_drift_sigma:
        amp = amp * np.exp(1j * rng.normal(0.0, params.phase_drift_sigma))
    if params.phase_drift_sigma_rel:
        amp = amp.copy() if amp is x.amp else amp
        amp[x.grid.window(Window.S)] *= np.exp(1j * rng.normal(0.0, params.phase_drift_sigma_rel))
    x = PulseTrain(x.grid, amp)
    if params.jitter_prob and rng.random() < params.jitter_prob:
        x = _jitter(x, 1 if rng.random() < 0.5 else -1)
    return x


def eve_beam_tap(train: PulseTrain, tap_ratio: float) -> tuple[PulseTrain, PulseTrain]:
    """Split off ``tap_ratio`` of the power; returns (to_bob, to_eve)."""
    if not 0.0 <= tap_ratio < 1.0:
        raise ValueError(f"tap_ratio={tap_ratio} must lie in [0, 1)")
    return attenuate(train, 1.0 - tap_ratio), attenuate(train, tap_ratio)


def eve_intercept_resend(
    train: PulseTrain,
    decoder: Decoder,
    mode: DetectMode | str,
    rng: np.random.Generator | None,
):
    """Measure with a nominal decoder bank and resend the best-guess symbol.

    Eve has no knowledge of the secret transforms, so she reads the train as
    if it were a plain encoding. An erasure leaves her nothing to resend and
    Bob receives vacuum.
    """
    guess, _ = decoder.decode(train, mode, rng)
    if guess is None:
        return PulseTrain.vacuum(train.grid), None
    return encode_symbol(guess, decoder.params, decoder.grid), guess


@dataclass
class EveLogEntry:
    stage: int
    model: str
    guess: tuple[int, int, int] | None = None
    tapped_photons: float = 0.0


@dataclass
class Channel:
    """Quantum channel with an optional eavesdropper sitting at its input.

    ``traverse`` is called once per pass through the channel with the stage
    number (1..3 for the three-stage flow, 1 for single-stage). Eve acts on
    the stages listed in her config, then the channel impairments apply.
    """

    params: ChannelParams = field(default_factory=ChannelParams)
    eve: EveConfig = field(default_factory=EveConfig)
    codec: CodecParams | None = None
    grid: TimeGrid | None = None
    eve_mode: DetectMode = DetectMode.DETERMINISTIC
    log: list[EveLogEntry] = field(default_factory=list)
    _eve_decoder: Decoder | None = field(default=None, init=False, repr=False)

    def eve_active(self, stage: int) -> bool:
        return self.eve.model is not EveModel.NONE and stage in self.eve.stages

    def traverse(
        self,
        train: PulseTrain,
        stage: int,
        rng: np.random.Generator | None = None,
        eve_rng: np.random.Generator | None = None,
    ) -> PulseTrain:
        if self.eve_active(stage):
            train = self._attack(train, stage, eve_rng if eve_rng is not None else rng)
        return transmit(train, self.params, rng)

    def _attack(self, train: PulseTrain, stage: int, rng) -> PulseTrain:
        if self.eve.model is EveModel.BEAM_TAP:
            to_bob, to_eve = eve_beam_tap(train, self.eve.tap_ratio)
            self.log.append(EveLogEntry(stage, self.eve.model.value, None, total_mean_photons(to_eve)))
            return to_bob
        if self._eve_decoder is None:
            if self.codec is None or self.grid is None:
                raise ValueError("intercept-resend needs the nominal codec and grid")
            self._eve_decoder = Decoder(self.codec, self.grid)
        resent, guess = eve_intercept_resend(train, self._eve_decoder, self.eve_mode, rng)
        self.log.append(
            EveLogEntry(stage, self.eve.model.value, tuple(guess) if guess is not None else None)
        )
        return resent


def common_phase(train: PulseTrain, phi: float) -> PulseTrain:
    """Rotate every bin by the same phase (unobservable by an interferometer)."""
    return PulseTrain(train.grid, train.amp * complex(math.cos(phi), math.sin(phi)))
