"""Monte Carlo experiment runner.

A run is fully determined by an :class:`ExperimentConfig`: trial ``k`` draws
its message, IV and protocol randomness from
``SeedSequence(master_seed, spawn_key=(k,))``, so trials can execute in any
order or in parallel and still produce the same rows.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Any, Sequence

import numpy as np
import yaml

from . import fock
from .channel import Channel, ChannelParams, EveConfig, EveModel
from .codec import CodecParams
from .protocols import (
    ProtocolConfig,
    ProtocolTranscript,
    rng_streams,
    run_iv_check,
    run_single_stage,
    run_three_stage,
)
from .pulse import DetectMode, PulseTrain, TimeGrid, detect_many
from .transforms import PHASE_TICKS, TransformPolicy


class ConfigError(ValueError):
    """Invalid experiment configuration; ``errors`` lists 'field: problem' strings."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass(frozen=True)
class CodecSection:
    intensity_levels: tuple[float, ...] = (4.0, 16.0)
    time_levels: int = 2
    phase_levels: int = 2


@dataclass(frozen=True)
class GridSection:
    bins_per_slot: int = 4
    delta_slots: int = 2


@dataclass(frozen=True)
class PhotonSection:
    n_i: float = 0.0
    n_f: float = 64.0
    source: float = 8.0


@dataclass(frozen=True)
class TransformSection:
    """Overrides for the random-transform sampling sets (null = protocol default)."""

    dn_max: int | None = None
    delay_bins: tuple[int, ...] | None = None
    phase_levels: int | None = None


@dataclass(frozen=True)
class ChannelSection:
    eta: float = 1.0
    phase_drift_sigma: float = 0.0
    phase_drift_sigma_rel: float = 0.0
    jitter_prob: float = 0.0
    dark_rate: float = 0.0


@dataclass(frozen=True)
class EveSection:
    model: str = "none"
    tap_ratio: float = 0.5
    stages: tuple[int, ...] = (1, 2, 3)


@dataclass(frozen=True)
class OptionsSection:
    iv_length: int = 0
    abort_threshold: float | None = None
    theta0: int = 1
    update_bits: int = 16
    block_symbols: int = 8
    passive_splitter_decoder: bool = False
    receiver_gain: float | None = None
    iv_early_stop: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str = "three_stage"
    detect_mode: str = "deterministic"
    trials: int = 10
    symbols_per_trial: int = 64
    master_seed: int = 0
    codec: CodecSection = field(default_factory=CodecSection)
    grid: GridSection = field(default_factory=GridSection)
    photons: PhotonSection = field(default_factory=PhotonSection)
    transforms: TransformSection = field(default_factory=TransformSection)
    channel: ChannelSection = field(default_factory=ChannelSection)
    eve: EveSection = field(default_factory=EveSection)
    options: OptionsSection = field(default_factory=OptionsSection)

    # -- derived objects -------------------------------------------------

    def codec_params(self) -> CodecParams:
        c = self.codec
        return CodecParams(tuple(c.intensity_levels), c.time_levels, c.phase_levels)

    def time_grid(self) -> TimeGrid:
        return TimeGrid(self.grid.bins_per_slot, self.grid.delta_slots)

    def abort_threshold(self) -> float:
        t = self.options.abort_threshold
        if t is not None:
            return t
        return 0.0 if self.detect_mode == "deterministic" else 0.05

    def policy(self) -> TransformPolicy | None:
        t = self.transforms
        if t.dn_max is None and t.delay_bins is None and t.phase_levels is None:
            return None
        pc = ProtocolConfig(**self._protocol_kwargs())
        base = pc.three_stage_policy() if self.protocol == "three_stage" else pc.single_stage_policy()
        phases = base.phase_choices
        if t.phase_levels is not None:
            phases = tuple(k * PHASE_TICKS // t.phase_levels for k in range(t.phase_levels))
        return TransformPolicy(
            (0, t.dn_max) if t.dn_max is not None else base.dn_range,
            tuple(t.delay_bins) if t.delay_bins is not None else base.delay_choices,
            phases,
        )

    def _protocol_kwargs(self) -> dict:
        o = self.options
        return dict(
            codec=self.codec_params(),
            grid=self.time_grid(),
            bounds=(self.photons.n_i, self.photons.n_f),
            source_photons=self.photons.source,
            mode=DetectMode(self.detect_mode),
            passive_splitter_decoder=o.passive_splitter_decoder,
            receiver_gain=o.receiver_gain,
            update_bits=o.update_bits,
            block_symbols=o.block_symbols,
        )

    def protocol_config(self) -> ProtocolConfig:
        return ProtocolConfig(**self._protocol_kwargs(), policy=self.policy())

    def channel_params(self) -> ChannelParams:
        return ChannelParams(**dataclasses.asdict(self.channel))

    def eve_config(self) -> EveConfig:
        return EveConfig(EveModel(self.eve.model), self.eve.tap_ratio, tuple(self.eve.stages))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {f.name: f for f in fields(ExperimentConfig)}


def _coerce(value: Any, default: Any, name: str, errors: list[str]):
    """Convert a parsed YAML scalar to the type of the field default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            errors.append(f"{name}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, tuple) or (default is None and isinstance(value, list)):
        if not isinstance(value, (list, tuple)):
            errors.append(f"{name}: expected a list, got {value!r}")
            return default
        return tuple(value)
    if default is None:
        # every optional field is numeric
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            errors.append(f"{name}: expected a number, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            errors.append(f"{name}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            errors.append(f"{name}: expected a number, got {value!r}")
            return default
        return float(value)
    return value


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build and validate a config; unknown keys anywhere are rejected."""
    if not isinstance(data, dict):
        raise ConfigError([f"<root>: expected a mapping, got {type(data).__name__}"])
    errors: list[str] = []
    defaults = ExperimentConfig()
    top: dict[str, Any] = {}
    for key, value in data.items():
        if key not in _SECTIONS:
            errors.append(f"{key}: unknown key")
            continue
        current = getattr(defaults, key)
        if dataclasses.is_dataclass(current):
            if not isinstance(value, dict):
                errors.append(f"{key}: expected a mapping")
                continue
            known = {f.name for f in fields(current)}
            sub = {}
            for k, v in value.items():
                if k not in known:
                    errors.append(f"{key}.{k}: unknown key")
                    continue
                d = getattr(current, k)
                if v is None and d is not None:
                    errors.append(f"{key}.{k}: may not be null")
                    continue
                sub[k] = _coerce(v, d, f"{key}.{k}", errors) if v is not None else None
            top[key] = dataclasses.replace(current, **sub)
        else:
            top[key] = _coerce(value, current, key, errors)
    if errors:
        raise ConfigError(errors)
    cfg = dataclasses.replace(defaults, **top)
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    """Cross-field checks; raises :class:`ConfigError` listing every problem found."""
    errors = []
    if cfg.protocol not in ("three_stage", "single_stage"):
        errors.append(f"protocol: must be three_stage or single_stage, got {cfg.protocol!r}")
    if cfg.detect_mode not in ("deterministic", "stochastic"):
        errors.append(f"detect_mode: must be deterministic or stochastic, got {cfg.detect_mode!r}")
    if cfg.trials < 0:
        errors.append("trials: must be non-negative")
    if cfg.symbols_per_trial < 0:
        errors.append("symbols_per_trial: must be non-negative")
    if cfg.options.iv_length < 0:
        errors.append("options.iv_length: must be non-negative")
    t = cfg.options.abort_threshold
    if t is not None and not 0.0 <= t <= 1.0:
        errors.append("options.abort_threshold: must lie in [0, 1]")
    checks = [
        ("codec", cfg.codec_params),
        ("grid", cfg.time_grid),
        ("channel", cfg.channel_params),
        ("eve", cfg.eve_config),
    ]
    for name, build in checks:
        try:
            build()
        except ValueError as exc:
            errors.append(f"{name}: {exc}")
    if not errors:
        try:
            cfg.protocol_config()
        except ValueError as exc:
            errors.append(f"protocol settings: {exc}")
    if errors:
        raise ConfigError(errors)


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    """Read a YAML (or JSON) config file."""
    with open(path) as fh:
        data = yaml.safe_load(fh)
    return config_from_dict(data or {})


@dataclass
class MetricsRow:
    trial_id: int
    protocol: str
    symbols_sent: int
    ber_total: float
    ber_intensity: float
    ber_time: float
    ber_phase: float
    erasure_rate: float
    bits_per_pulse: float
    eve_model: str
    eve_detected: bool
    aborted: bool
    mean_photons_at_bob: float
    seed: int


METRIC_FIELDS = [f.name for f in fields(MetricsRow)]


def _trial_seed(master_seed: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(trial,))


def _run_protocol(cfg: ExperimentConfig, pc: ProtocolConfig, bits, rng, channel, theta=None, stop=None):
    if cfg.protocol == "three_stage":
        return run_three_stage(bits, channel, pc, rng, stop_after_errors=stop)
    ta, tb = theta if theta is not None else (cfg.options.theta0, cfg.options.theta0)
    return run_single_stage(bits, ta, channel, pc, rng, theta0_bob=tb, stop_after_errors=stop)


def summarize(transcript: ProtocolTranscript, cfg: ExperimentConfig, trial: int, aborted: bool, eve_detected: bool) -> MetricsRow:
    recs = transcript.records
    n = len(recs)
    decided = [r for r in recs if r.decoded is not None]
    nd = len(decided)
    wrong = [r for r in decided if r.decoded != r.sent]
    wi = sum(r.decoded.i_level != r.sent.i_level for r in decided)
    wt = sum(r.decoded.t_level != r.sent.t_level for r in decided)
    wp = sum(r.decoded.p_level != r.sent.p_level for r in decided)
    detected = [r for r in recs if not r.invalid]
    erasure = (n - nd) / n if n else 0.0
    bps = cfg.codec_params().bits_per_symbol
    return MetricsRow(
        trial_id=trial,
        protocol=cfg.protocol,
        symbols_sent=n,
        ber_total=len(wrong) / nd if nd else 0.0,
        ber_intensity=wi / nd if nd else 0.0,
        ber_time=wt / nd if nd else 0.0,
        ber_phase=wp / nd if nd else 0.0,
        erasure_rate=erasure,
        bits_per_pulse=bps * (1.0 - erasure),
        eve_model=cfg.eve.model,
        eve_detected=eve_detected,
        aborted=aborted,
        mean_photons_at_bob=float(np.mean([r.total_counts for r in detected])) if detected else 0.0,
        seed=cfg.master_seed,
    )


def run_trial(cfg: ExperimentConfig, trial: int) -> MetricsRow:
    pc = cfg.protocol_config()
    streams = rng_streams(_trial_seed(cfg.master_seed, trial), ("message", "iv", "iv_protocol", "protocol"))
    k = pc.codec.bits_per_symbol
    theta = None
    aborted = eve_detected = False

    def channel():
        return Channel(cfg.channel_params(), cfg.eve_config(), pc.codec, pc.grid, pc.mode)

    if cfg.options.iv_length:
        threshold = cfg.abort_threshold()
        iv_bits = streams["iv"].integers(0, 2, cfg.options.iv_length * k).tolist()
        # once more than threshold*n symbols are wrong the verdict cannot change
        stop = math.floor(threshold * cfg.options.iv_length) + 1 if cfg.options.iv_early_stop else None
        seed = int(streams["iv_protocol"].integers(2**63))
        report, iv_tx = run_iv_check(
            iv_bits, lambda b: _run_protocol(cfg, pc, b, seed, channel(), stop=stop), threshold
        )
        aborted = not report.passed
        eve_detected = report.errors > 0
        if iv_tx.theta_alice:
            theta = (iv_tx.theta_alice[-1], iv_tx.theta_bob[-1])
    bits = streams["message"].integers(0, 2, cfg.symbols_per_trial * k).tolist()
    seed = int(streams["protocol"].integers(2**63))
    tx = _run_protocol(cfg, pc, bits, seed, channel(), theta=theta)
    return summarize(tx, cfg, trial, aborted, eve_detected)


def _run_trial_args(args):
    return run_trial(*args)


def run_trials(cfg: ExperimentConfig, workers: int = 1) -> list[MetricsRow]:
    """Run every trial; rows are ordered by trial id whatever ``workers`` is."""
    validate_config(cfg)
    jobs = [(cfg, t) for t in range(cfg.trials)]
    if workers <= 1 or cfg.trials <= 1:
        return [run_trial(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_trial_args, jobs, chunksize=max(1, cfg.trials // (4 * workers))))


def with_param(cfg: ExperimentConfig, path: str, value) -> ExperimentConfig:
    """Copy of ``cfg`` with the dotted numeric field ``path`` set to ``value``."""
    parts = path.split(".")
    if len(parts) == 1:
        section_name, key = None, parts[0]
        target = cfg
    elif len(parts) == 2:
        section_name, key = parts
        if section_name not in _SECTIONS or not dataclasses.is_dataclass(getattr(cfg, section_name)):
            raise ConfigError([f"{path}: unknown section {section_name!r}"])
        target = getattr(cfg, section_name)
    else:
        raise ConfigError([f"{path}: expected 'field' or 'section.field'"])
    names = {f.name for f in fields(target)}
    if key not in names:
        raise ConfigError([f"{path}: unknown field"])
    current = getattr(target, key)
    if isinstance(current, bool) or not isinstance(current, (int, float, type(None))):
        raise ConfigError([f"{path}: not a numeric field"])
    value = int(value) if isinstance(current, int) and float(value).is_integer() else float(value)
    if section_name is None:
        new = dataclasses.replace(cfg, **{key: value})
    else:
        new = dataclasses.replace(cfg, **{section_name: dataclasses.replace(target, **{key: value})})
    validate_config(new)
    return new


def sweep(cfg: ExperimentConfig, path: str, values: Sequence[float], workers: int = 1) -> dict[float, list[MetricsRow]]:
    """One :func:`run_trials` block per value, keyed by value."""
    configs = [(v, with_param(cfg, path, v)) for v in values]
    return {v: run_trials(c, workers) for v, c in configs}


def sweep_rows(results: dict[float, list[MetricsRow]]) -> list[tuple[float, MetricsRow]]:
    return [(v, r) for v, rows in results.items() for r in rows]


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    n = max(len(p), len(q))
    p = np.pad(p, (0, n - len(p)))
    q = np.pad(q, (0, n - len(q)))
    return 0.5 * float(np.abs(p - q).sum())


def cross_validate_oracle(
    amplitudes: Sequence[complex] = (0.0, 0.5, 1.0, 1.5, 2.0),
    samples: int = 100_000,
    seed: int = 0,
    cutoff: int = 40,
    displacements: Sequence[tuple[complex, complex]] = ((0, 1.0), (1.0, 0.5), (0.5j, -1.0), (-1.0, 1.0 + 1.0j), (0, 2.0)),
    max_leakage: float = 1e-6,
) -> dict:
    """Compare the amplitude engine's photon counting against the Fock oracle.

    For each amplitude a one-bin train is counted ``samples`` times through
    :func:`pulse.detect_many` and the histogram is compared to the
    photon-number distribution of the truncated coherent state. The report
    also carries displacement fidelities and ladder identity residuals;
    ``max_leakage`` bounds the norm a displacement may push past the cutoff.
    """
    rng = np.random.default_rng(seed)
    grid = TimeGrid()
    hist = []
    for a in amplitudes:
        amp = np.zeros(grid.n_bins, dtype=complex)
        amp[0] = a
        train = PulseTrain(grid, amp)
        rec = detect_many([train] * samples, [f"s{i}" for i in range(samples)], DetectMode.STOCHASTIC, 0.0, rng)
        counts = rec.counts[:, 0].astype(int)
        empirical = np.bincount(counts, minlength=cutoff + 1) / samples
        oracle = fock.photon_number_distribution(fock.coherent_state(a, cutoff))
        hist.append(
            {
                "alpha": [float(np.real(a)), float(np.imag(a))],
                "tv_distance": total_variation(empirical, oracle),
                "sample_mean": float(counts.mean()),
                "sample_var": float(counts.var()),
            }
        )
    disp = []
    for a, b in displacements:
        shifted = fock.apply_displacement(fock.coherent_state(a, cutoff), b, max_leakage)
        target = fock.coherent_state(complex(a) + complex(b), cutoff)
        disp.append(
            {
                "alpha": [float(np.real(a)), float(np.imag(a))],
                "beta": [float(np.real(b)), float(np.imag(b))],
                "fidelity": fock.fidelity(shifted, target),
                "leakage": shifted.leakage,
            }
        )
    ladder = 0.0
    for n in range(cutoff):
        v = fock.apply_annihilation(fock.apply_creation(fock.number_state(n, cutoff)))
        expected = (n + 1) * fock.number_state(n, cutoff).amplitudes
        ladder = max(ladder, float(np.max(np.abs(v.amplitudes - expected))))
    return {
        "samples": samples,
        "cutoff": cutoff,
        "histograms": hist,
        "max_tv_distance": max(h["tv_distance"] for h in hist),
        "displacements": disp,
        "min_displacement_fidelity": min(d["fidelity"] for d in disp),
        "ladder_max_residual": ladder,
    }


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".9g")
    return str(value)


def _json_value(value):
    if isinstance(value, float) and math.isfinite(value):
        return float(format(value, ".9g"))
    return value


def _write_rows(fh, rows, fmt, extra):
    header = list(extra) + METRIC_FIELDS
    if fmt == "csv":
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, r in enumerate(rows):
            vals = [extra[c][i] for c in extra] + [getattr(r, f) for f in METRIC_FIELDS]
            w.writerow([_fmt(v) for v in vals])
    elif fmt == "json":
        out = []
        for i, r in enumerate(rows):
            d = {c: _json_value(extra[c][i]) for c in extra}
            d.update({f: _json_value(getattr(r, f)) for f in METRIC_FIELDS})
            out.append(d)
        json.dump(out, fh, indent=1)
        fh.write("\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def write_results(rows: Sequence[MetricsRow], fmt: str, path, extra_columns: dict[str, list] | None = None) -> None:
    """Write metrics rows as CSV (fixed column order) or a JSON list.

    ``path`` may be a filesystem path or an open text stream.
    ``extra_columns`` prepends columns (e.g. the swept value) in CSV and adds
    keys in JSON.
    """
    extra = extra_columns or {}
    if hasattr(path, "write"):
        _write_rows(path, rows, fmt, extra)
        return
    try:
        with open(path, "w", newline="") as fh:
            _write_rows(fh, rows, fmt, extra)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
