"""Three-stage and single-stage compact-coding protocol engines.

Both engines work symbol by symbol over the pulse, transform and codec
layers and return a :class:`ProtocolTranscript` that is a pure function of
the configuration and the seed.

Three-stage flow (three channel passes per symbol):

1. Alice's source pair carries the message delay D_M on P2; she applies her
   random transform (I_A, D_A, alpha_A, beta_A) and sends.
2. Bob applies (I_B, D_B, alpha_B, beta_B) and sends back.
3. Alice removes I_A and adds the message intensity, cancels D_A by
   delaying P1, removes her phases and adds the message phase, and sends.
4. Bob removes his transform the same way and decodes.

Single-stage flow (one pass): Alice and Bob both derive the per-symbol
transform from the shared secret theta. Bob removes delay and phases
optically and removes the added photons numerically, by offsetting the
intensity decision. After every block both sides advance theta from the
last ``update_bits`` bits of the block, each from their own copy.

The message phase always rides on P2 (S window); only the relative phase
of the pair is observable.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .channel import Channel
from .codec import CodecParams, CompactSymbol, Decoder, bits_to_symbols, pulse_pair, symbol_to_bits
from .pulse import (
    DetectMode,
    IntensityRangeError,
    PulseTrain,
    TimeGrid,
    UndefinedPhaseError,
    Window,
    WindowViolation,
    delay_window,
    total_mean_photons,
)
from .transforms import (
    IDENTITY,
    SecretTransform,
    TransformPolicy,
    apply_transform,
    negate,
    radians_to_ticks,
    sample_transform,
)

log = logging.getLogger(__name__)

_PROTOCOL_ERRORS = (WindowViolation, IntensityRangeError, UndefinedPhaseError)


class InsufficientMaterialError(ValueError):
    pass


@dataclass(frozen=True)
class ProtocolConfig:
    """Everything both parties agree on before a session.

    ``bounds`` is the (n_i, n_f) mean-photon window every intermediate
    pulse must respect; ``source_photons`` is the source intensity before
    any intensity transform. ``policy`` overrides the random-transform
    sampling sets; by default dN spans what keeps the worst case inside
    ``bounds``. ``receiver_gain`` is Bob's assumed end-to-end transmittance
    for the intensity decision (defaults to the channel eta).
    """

    codec: CodecParams = field(default_factory=CodecParams)
    grid: TimeGrid = field(default_factory=TimeGrid)
    bounds: tuple[float, float] = (0.0, 64.0)
    source_photons: float = 8.0
    mode: DetectMode = DetectMode.DETERMINISTIC
    policy: TransformPolicy | None = None
    passive_splitter_decoder: bool = False
    receiver_gain: float | None = None
    theta_modulus: int = 2**32
    update_bits: int = 16
    block_symbols: int = 8
    keep_records: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", DetectMode(self.mode))
        lo, hi = self.bounds
        if not 0 <= lo < hi:
            raise ValueError(f"invalid photon bounds {self.bounds}")
        if self.codec.intensity_levels[-1] > hi:
            raise ValueError(f"top intensity level exceeds n_f={hi}")
        if not lo <= self.source_photons <= hi or self.source_photons <= 0:
            raise ValueError(f"source_photons={self.source_photons} outside {self.bounds}")
        self.codec.time_bins(self.grid)
        if self.update_bits < 1 or self.block_symbols < 1:
            raise ValueError("update_bits and block_symbols must be positive")

    def three_stage_policy(self) -> TransformPolicy:
        """Both parties add photons before either removes any, so each gets half the headroom."""
        if self.policy is not None:
            return self.policy
        top = max(self.codec.intensity_levels[-1], self.source_photons)
        return TransformPolicy.default(self.grid, int((self.bounds[1] - top) // 2))

    def single_stage_policy(self) -> TransformPolicy:
        if self.policy is not None:
            return self.policy
        return TransformPolicy.default(self.grid, int(self.bounds[1] - self.codec.intensity_levels[-1]))


@dataclass
class SymbolRecord:
    index: int
    bits: list[int]
    sent: CompactSymbol
    transforms: dict[str, SecretTransform]
    traversals: int = 0
    decoded: CompactSymbol | None = None
    erasure: bool = False
    invalid: bool = False
    reason: str = ""
    total_counts: float = 0.0
    photons_at_bob: float = 0.0
    detection: dict | None = None

    @property
    def ok(self) -> bool:
        return self.decoded == self.sent

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "bits": self.bits,
            "sent": list(self.sent),
            "transforms": {k: v.to_dict() for k, v in sorted(self.transforms.items())},
            "traversals": self.traversals,
            "decoded": list(self.decoded) if self.decoded is not None else None,
            "erasure": self.erasure,
            "invalid": self.invalid,
            "reason": self.reason,
            "total_counts": repr(float(self.total_counts)),
            "photons_at_bob": repr(float(self.photons_at_bob)),
            "detection": self.detection,
        }


@dataclass
class IVReport:
    passed: bool
    errors: int
    n_symbols: int
    positions: list[int]
    threshold: float

    @property
    def error_fraction(self) -> float:
        return self.errors / self.n_symbols if self.n_symbols else 0.0

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "errors": self.errors,
            "n_symbols": self.n_symbols,
            "positions": self.positions,
            "threshold": self.threshold,
        }


@dataclass
class ProtocolTranscript:
    protocol: str
    records: list[SymbolRecord] = field(default_factory=list)
    theta_alice: list[int] = field(default_factory=list)
    theta_bob: list[int] = field(default_factory=list)
    iv: IVReport | None = None

    @property
    def sent_bits(self) -> list[int]:
        return [b for r in self.records for b in r.bits]

    def decoded_bits(self, codec: CodecParams) -> list[int]:
        """Bob's bit string; erased or invalid symbols read as zeros."""
        return _bob_bits(self.records, codec)

    def to_json(self) -> str:
        payload = {
            "protocol": self.protocol,
            "records": [r.to_dict() for r in self.records],
            "theta_alice": self.theta_alice,
            "theta_bob": self.theta_bob,
            "iv": self.iv.to_dict() if self.iv else None,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _bob_bits(records: Sequence[SymbolRecord], codec: CodecParams) -> list[int]:
    k = codec.bits_per_symbol
    out: list[int] = []
    for r in records:
        out += [0] * k if r.decoded is None else symbol_to_bits(r.decoded, codec)
    return out


def rng_streams(seed, names: Sequence[str]) -> dict[str, np.random.Generator]:
    """Independent named generators derived from one seed.

    ``seed`` may be an int, a SeedSequence or a Generator (one draw is taken
    from it). Children are keyed by position in ``names`` so adding a
    consumer later in the list never perturbs earlier streams.
    """
    if isinstance(seed, np.random.Generator):
        seed = int(seed.integers(2**63))
    if isinstance(seed, np.random.SeedSequence):
        entropy, key = seed.entropy, tuple(seed.spawn_key)
    else:
        entropy, key = seed, ()
    return {
        name: np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=key + (i,)))
        for i, name in enumerate(names)
    }


_STREAMS = ("alice", "bob", "channel", "eve", "detect")


@dataclass
class ThetaState:
    theta: int
    update_bits: int = 16
    modulus: int = 2**32

    def __post_init__(self):
        if not 0 <= self.theta < self.modulus:
            raise ValueError(f"theta={self.theta} outside [0, {self.modulus})")


def next_theta(state: ThetaState, transmitted_bits: Sequence[int]) -> ThetaState:
    """theta' = (theta + value of the last n bits + 1) mod M.

    The +1 keeps all-zero material from freezing theta.
    """
    n = state.update_bits
    if len(transmitted_bits) < n:
        raise InsufficientMaterialError(f"need {n} bits to update theta, got {len(transmitted_bits)}")
    value = 0
    for b in transmitted_bits[-n:]:
        value = (value << 1) | int(b)
    return ThetaState((state.theta + value + 1) % state.modulus, n, state.modulus)


def theta_generator(theta: int) -> np.random.Generator:
    """Counter-mode generator keyed by theta; equal theta gives equal draws."""
    return np.random.Generator(np.random.Philox(key=theta))


class _Session:
    """Shared plumbing for one protocol run."""

    def __init__(self, config: ProtocolConfig, channel: Channel | None, rng):
        self.config = config
        self.channel = channel or Channel(codec=config.codec, grid=config.grid)
        if self.channel.codec is None:
            self.channel.codec = config.codec
        if self.channel.grid is None:
            self.channel.grid = config.grid
        self.streams = rng_streams(rng, _STREAMS)
        self.decoder = Decoder(config.codec, config.grid, config.passive_splitter_decoder)
        self.t_bins = config.codec.time_bins(config.grid)
        self._message_cache: dict[CompactSymbol, SecretTransform] = {}
        self.gain = (
            config.receiver_gain if config.receiver_gain is not None else self.channel.params.eta
        )

    def message_transform(self, sym: CompactSymbol) -> SecretTransform:
        """(I_M, D_M, 0, phi_M) relative to the source pair."""
        t = self._message_cache.get(sym)
        if t is None:
            t = self._message_cache[sym] = self._build_message_transform(sym)
        return t

    def _build_message_transform(self, sym: CompactSymbol) -> SecretTransform:
        codec = self.config.codec
        return SecretTransform(
            Fraction(codec.mean_photons(sym.i_level)) - Fraction(self.config.source_photons),
            self.t_bins[sym.t_level],
            0,
            radians_to_ticks(codec.phase(sym.p_level)),
        )

    def source(self) -> PulseTrain:
        return pulse_pair(self.config.grid, self.config.source_photons, 0, 0.0)

    def traverse(self, x: PulseTrain, stage: int, rec: SymbolRecord) -> PulseTrain:
        rec.traversals += 1
        return self.channel.traverse(x, stage, self.streams["channel"], self.streams["eve"])

    def finish(self, rec: SymbolRecord, x: PulseTrain, offset: float = 0.0):
        rec.photons_at_bob = total_mean_photons(x)
        sym, diag = self.decoder.decode(
            x,
            self.config.mode,
            self.streams["detect"],
            self.channel.params.dark_rate,
            self.gain,
            offset,
        )
        rec.decoded = sym
        rec.erasure = diag.erasure
        rec.total_counts = diag.total_counts
        if self.config.keep_records and diag.record is not None:
            rec.detection = diag.record.to_dict()

    def bob_bits(self, records: Sequence[SymbolRecord]) -> list[int]:
        return _bob_bits(records, self.config.codec)


def _check_message(bits: Sequence[int], codec: CodecParams) -> list[CompactSymbol]:
    return bits_to_symbols(list(bits), codec)


def run_three_stage(
    message_bits: Sequence[int],
    channel: Channel | None = None,
    config: ProtocolConfig | None = None,
    rng=0,
    *,
    alice_policy: TransformPolicy | None = None,
    bob_policy: TransformPolicy | None = None,
    stop_after_errors: int | None = None,
) -> ProtocolTranscript:
    """Run the three-pass protocol over ``message_bits``.

    ``stop_after_errors`` ends the session once that many symbols have come
    back wrong (the receiver would abort anyway); ``None`` sends everything.
    """
    config = config or ProtocolConfig()
    symbols = _check_message(message_bits, config.codec)
    s = _Session(config, channel, rng)
    bounds = config.bounds
    pa = alice_policy or config.three_stage_policy()
    pb = bob_policy or config.three_stage_policy()
    k = config.codec.bits_per_symbol
    out = ProtocolTranscript("three_stage")
    for i, sym in enumerate(symbols):
        ta = sample_transform(s.streams["alice"], pa)
        tb = sample_transform(s.streams["bob"], pb)
        tm = s.message_transform(sym)
        rec = SymbolRecord(i, list(message_bits[i * k : (i + 1) * k]), sym, {"alice": ta, "bob": tb, "message": tm})
        try:
            # step 1: MZ split puts D_M on P2, then Alice's random transform
            x = delay_window(s.source(), Window.S, tm.dD)
            x = apply_transform(x, ta, bounds)
            x = s.traverse(x, 1, rec)
            # step 2
            x = apply_transform(x, tb, bounds)
            x = s.traverse(x, 2, rec)
            # step 3: remove A, then add the message intensity and phase
            x = negate(x, ta, bounds)
            x = apply_transform(x, SecretTransform(tm.dN, 0, tm.alpha_ticks, tm.beta_ticks), bounds)
            x = s.traverse(x, 3, rec)
            # step 4
            x = negate(x, tb, bounds)
        except _PROTOCOL_ERRORS as exc:
            rec.invalid = True
            rec.reason = f"{type(exc).__name__}: {exc}"
            rec.traversals = 3
        else:
            s.finish(rec, x)
        out.records.append(rec)
        if _should_stop(out, stop_after_errors):
            break
    return out


def run_single_stage(
    message_bits: Sequence[int],
    theta0: int,
    channel: Channel | None = None,
    config: ProtocolConfig | None = None,
    rng=0,
    *,
    theta0_bob: int | None = None,
    stop_after_errors: int | None = None,
) -> ProtocolTranscript:
    """Single-pass protocol; ``theta0_bob`` simulates a desynchronised receiver.

    ``stop_after_errors`` behaves as in :func:`run_three_stage`.
    """
    config = config or ProtocolConfig()
    symbols = _check_message(message_bits, config.codec)
    s = _Session(config, channel, rng)
    policy = config.single_stage_policy()
    bounds = config.bounds
    k = config.codec.bits_per_symbol
    state_a = ThetaState(theta0, config.update_bits, config.theta_modulus)
    state_b = ThetaState(theta0 if theta0_bob is None else theta0_bob, config.update_bits, config.theta_modulus)
    out = ProtocolTranscript("single_stage", theta_alice=[state_a.theta], theta_bob=[state_b.theta])

    for start in range(0, len(symbols), config.block_symbols):
        block = symbols[start : start + config.block_symbols]
        gen_a = theta_generator(state_a.theta)
        gen_b = theta_generator(state_b.theta)
        block_records = []
        for j, sym in enumerate(block):
            i = start + j
            ta = sample_transform(gen_a, policy)
            tb = sample_transform(gen_b, policy)
            tm = s.message_transform(sym)
            rec = SymbolRecord(
                i, list(message_bits[i * k : (i + 1) * k]), sym, {"alice": ta, "bob_view": tb, "message": tm}
            )
            block_records.append(rec)
            out.records.append(rec)
            try:
                x = delay_window(s.source(), Window.S, tm.dD)
                x = apply_transform(x, SecretTransform(tm.dN, 0, tm.alpha_ticks, tm.beta_ticks), bounds)
                x = apply_transform(x, ta, bounds)
                x = s.traverse(x, 1, rec)
                # photons stay on: Bob only undoes delay and phases optically
                x = negate(x, SecretTransform(0, tb.dD, tb.alpha_ticks, tb.beta_ticks), bounds)
            except _PROTOCOL_ERRORS as exc:
                rec.invalid = True
                rec.reason = f"{type(exc).__name__}: {exc}"
                rec.traversals = 1
            else:
                s.finish(rec, x, offset=float(tb.dN))
            if _should_stop(out, stop_after_errors):
                return out

        sent = [b for r in block_records for b in r.bits]
        if len(sent) >= config.update_bits:
            state_a = next_theta(state_a, sent)
            state_b = next_theta(state_b, s.bob_bits(block_records))
            out.theta_alice.append(state_a.theta)
            out.theta_bob.append(state_b.theta)
    return out


def _should_stop(out: ProtocolTranscript, limit: int | None) -> bool:
    if limit is None:
        return False
    return sum(r.decoded != r.sent for r in out.records) >= limit


def symbol_errors(transcript: ProtocolTranscript) -> list[int]:
    """Indices of symbols Bob did not recover (erasures and invalid included)."""
    return [r.index for r in transcript.records if r.decoded != r.sent]


def run_iv_check(
    iv_bits: Sequence[int],
    runner: Callable[[Sequence[int]], ProtocolTranscript],
    threshold: float,
) -> tuple[IVReport, ProtocolTranscript]:
    """Send a pre-shared IV and abort if too many symbols come back wrong."""
    if threshold >= 1.0:
        warnings.warn("IV threshold >= 100% can never abort", stacklevel=2)
    transcript = runner(iv_bits)
    positions = symbol_errors(transcript)
    n = len(transcript.records)
    frac = len(positions) / n if n else 0.0
    report = IVReport(frac <= threshold, len(positions), n, positions, threshold)
    if not report.passed:
        log.info("IV check aborted: %d/%d symbols wrong", len(positions), n)
    transcript.iv = report
    return report, transcript


def reuse_check_bits(transcript: ProtocolTranscript, n_symbols: int) -> list[int]:
    """Bits of the last ``n_symbols`` symbols both sides already share, for the next check."""
    recs = transcript.records[-n_symbols:] if n_symbols else []
    return [b for r in recs for b in r.bits]


def identity_policy() -> TransformPolicy:
    return TransformPolicy.degenerate()


__all__ = [
    "IDENTITY",
    "IVReport",
    "InsufficientMaterialError",
    "ProtocolConfig",
    "ProtocolTranscript",
    "SymbolRecord",
    "ThetaState",
    "identity_policy",
    "next_theta",
    "reuse_check_bits",
    "rng_streams",
    "run_iv_check",
    "run_single_stage",
    "run_three_stage",
    "symbol_errors",
    "theta_generator",
]
