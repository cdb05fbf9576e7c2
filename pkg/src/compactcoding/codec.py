"""Compact-coding symbols: bit groups <-> (intensity, time, phase) levels.

A symbol is sent as a pulse pair: half the photons in the early pulse at bin
0 and half in a late pulse delayed by Delta + t whose relative phase is phi.
The message phase always rides on the late pulse.

The receiver is a bank of unbalanced interferometers, one per time level.
Each branch gates the early pulse into a delay line of Delta + t_k and
recombines it with the late pulse on a 50/50 splitter, so only the branch
whose delay matches the sent t concentrates its light in one bin, and there
the bright/dark ports split the photons as (1 + cos phi) : (1 - cos phi).
For more than two phase levels each branch feeds two combiners with
reference phases 0 and pi/2 and the phase is read from the two contrasts.
The intensity level comes from the sum of every count.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .pulse import (
    DetectionRecord,
    DetectMode,
    PulseTrain,
    TimeGrid,
    combine_50_50,
    detect_amplitudes,
    gated_route,
    make_pulse_pair,
    pad,
    shift,
    split,
)


class FramingError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


def _is_power_of_two(n: int) -> bool:
    return n >= 2 and n & (n - 1) == 0


@dataclass(frozen=True)
class CodecParams:
    """Level alphabets.

    ``intensity_levels`` are the mean photon numbers mu_1 < ... < mu_L. Time
    level k is a delay of k*T/time_levels and phase level k is 2*pi*k/phase_levels.
    """

    intensity_levels: tuple[float, ...] = (4.0, 16.0)
    time_levels: int = 2
    phase_levels: int = 2

    def __post_init__(self):
        levels = tuple(float(x) for x in self.intensity_levels)
        object.__setattr__(self, "intensity_levels", levels)
        for name, n in (
            ("intensity", len(levels)),
            ("time", self.time_levels),
            ("phase", self.phase_levels),
        ):
            if not _is_power_of_two(n):
                raise ConfigurationError(f"{name} level count {n} is not a power of two >= 2")
        if levels[0] <= 0 or any(b <= a for a, b in zip(levels, levels[1:])):
            raise ConfigurationError(f"intensity levels {levels} must be positive and strictly increasing")

    @property
    def intensity_count(self) -> int:
        return len(self.intensity_levels)

    @property
    def field_widths(self) -> tuple[int, int, int]:
        return (
            self.intensity_count.bit_length() - 1,
            self.time_levels.bit_length() - 1,
            self.phase_levels.bit_length() - 1,
        )

    @property
    def bits_per_symbol(self) -> int:
        return sum(self.field_widths)

    @property
    def alphabet_size(self) -> int:
        return self.intensity_count * self.time_levels * self.phase_levels

    def mean_photons(self, i_level: int) -> float:
        return self.intensity_levels[i_level]

    def time_delay(self, t_level: int) -> float:
        """Delay in units of T."""
        return t_level / self.time_levels

    def phase(self, p_level: int) -> float:
        return 2 * math.pi * p_level / self.phase_levels

    def time_bins(self, grid: TimeGrid) -> list[int]:
        try:
            return [grid.to_bins(self.time_delay(k)) for k in range(self.time_levels)]
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None

    def alphabet(self) -> list["CompactSymbol"]:
        return [
            CompactSymbol(i, t, p)
            for i in range(self.intensity_count)
            for t in range(self.time_levels)
            for p in range(self.phase_levels)
        ]


class CompactSymbol(NamedTuple):
    i_level: int
    t_level: int
    p_level: int


def _to_int(bits: Sequence[int]) -> int:
    v = 0
    for b in bits:
        v = (v << 1) | int(b)
    return v


def _to_bits(value: int, width: int) -> list[int]:
    return [(value >> (width - 1 - i)) & 1 for i in range(width)]


def bits_to_symbol(bits: Sequence[int], params: CodecParams) -> CompactSymbol:
    """Split a bit group MSB-first into intensity, time and phase fields."""
    wi, wt, wp = params.field_widths
    if len(bits) != wi + wt + wp:
        raise FramingError(f"expected {wi + wt + wp} bits per symbol, got {len(bits)}")
    if any(b not in (0, 1) for b in bits):
        raise FramingError(f"bit group {list(bits)} contains non-binary values")
    return CompactSymbol(
        _to_int(bits[:wi]), _to_int(bits[wi : wi + wt]), _to_int(bits[wi + wt :])
    )


def symbol_to_bits(sym: CompactSymbol, params: CodecParams) -> list[int]:
    wi, wt, wp = params.field_widths
    if not (
        0 <= sym.i_level < params.intensity_count
        and 0 <= sym.t_level < params.time_levels
        and 0 <= sym.p_level < params.phase_levels
    ):
        raise IndexError(f"symbol {sym} outside the configured alphabet")
    return _to_bits(sym.i_level, wi) + _to_bits(sym.t_level, wt) + _to_bits(sym.p_level, wp)


def bits_to_symbols(bits: Sequence[int], params: CodecParams) -> list[CompactSymbol]:
    k = params.bits_per_symbol
    if len(bits) % k:
        raise FramingError(f"message of {len(bits)} bits is not a multiple of {k}")
    return [bits_to_symbol(bits[i : i + k], params) for i in range(0, len(bits), k)]


def pulse_pair(grid: TimeGrid, mean_photons: float, delay_bins: int, phase: float) -> PulseTrain:
    """Encoder output (a_0 + e^{i phase} a_{Delta+t}) / sqrt(2) at the given intensity."""
    a = math.sqrt(mean_photons / 2)
    return make_pulse_pair(grid, a, a * complex(math.cos(phase), math.sin(phase)), grid.delta_bins + delay_bins)


def encode_symbol(sym: CompactSymbol, params: CodecParams, grid: TimeGrid) -> PulseTrain:
    symbol_to_bits(sym, params)  # range check
    t_bins = params.time_bins(grid)[sym.t_level]
    return pulse_pair(grid, params.mean_photons(sym.i_level), t_bins, params.phase(sym.p_level))


def intensity_thresholds(
    params: CodecParams, gain: float = 1.0, offset: float = 0.0, background: float = 0.0
) -> list[float]:
    """Maximum-likelihood count boundaries between adjacent intensity levels.

    Level k is expected to give Poisson(gain * (mu_k + offset) + background)
    total counts. Between rates a < b the likelihoods cross at
    n* = (b - a) / ln(b / a); counts >= n* are assigned to the upper level.
    """
    levels = params.intensity_levels
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigurationError(f"intensity levels {levels} are not strictly increasing")
    rates = [gain * (mu + offset) + background for mu in levels]
    out = []
    for a, b in zip(rates, rates[1:]):
        if b <= a:
            raise ConfigurationError(f"expected count rates {rates} are not strictly increasing")
        if a <= 0:
            # Poisson(0) only ever yields 0
            out.append(1e-9)
        else:
            out.append((b - a) / math.log(b / a))
    return out


def classify_intensity(total_counts: float, thresholds: Sequence[float]) -> int:
    return bisect.bisect_right(thresholds, total_counts)


@dataclass
class DecodeDiagnostics:
    """Evidence behind one decoding decision."""

    matched_branch: int
    concentrations: tuple[float, ...]
    modal_bins: tuple[int, ...]
    bright: float
    dark: float
    total_counts: float
    branch_totals: tuple[float, ...]
    phase_estimate: float = 0.0
    erasure: bool = False
    branch_tie: bool = False
    phase_tie: bool = False
    record: DetectionRecord | None = field(default=None, repr=False)


class Decoder:
    """Interferometer bank plus classical decision logic for one codec.

    ``gain`` and ``offset`` describe how the receiver expects the total count
    to relate to the sent level: rate = gain * (mu + offset) + dark counts.
    A gain below one models known channel loss, a positive offset models
    photons added by a transform that is removed numerically.

    ``passive_splitter`` swaps the time gate in every branch for a 50/50
    splitter, giving the textbook layout with satellite peaks.
    """

    def __init__(self, params: CodecParams, grid: TimeGrid, passive_splitter: bool = False):
        self.params = params
        self.grid = grid
        self.passive = passive_splitter
        self.t_bins = params.time_bins(grid)
        self.quadrature = params.phase_levels > 2
        # passive layout delays the late pulse too: up to 2*Delta + t past the frame start
        self.work_grid = grid.padded(grid.frame_bins + grid.delta_bins)
        self.ports = self._port_names()
        self._response = self._impulse_response()
        self._thresholds: dict[tuple[float, float, float], list[float]] = {}

    def _port_names(self) -> list[str]:
        names = []
        for k in range(self.params.time_levels):
            banks = ("q0", "q1") if self.quadrature else ("",)
            for bank in banks:
                names += [f"b{k}{bank}+", f"b{k}{bank}-"]
        return names

    def optics(self, train: PulseTrain) -> list[PulseTrain]:
        """Output trains of every detector port, in ``self.ports`` order."""
        x = pad(train, self.work_grid) if train.grid != self.work_grid else train
        delta = self.grid.delta_bins
        outs = []
        for k, branch in enumerate(split(x, self.params.time_levels)):
            line = delta + self.t_bins[k]
            if self.passive:
                arm_delay, arm_direct = split(branch, 2)
                delayed, direct = shift(arm_delay, line), arm_direct
            else:
                early, direct = gated_route(branch, delta)
                delayed = shift(early, line)
            if self.quadrature:
                d0, d1 = split(delayed, 2)
                l0, l1 = split(direct, 2)
                outs += combine_50_50(d0, l0)
                outs += combine_50_50(phase_shift_window_all(d1, math.pi / 2), l1)
            else:
                outs += combine_50_50(delayed, direct)
        return outs

    def _impulse_response(self) -> np.ndarray:
        # the bank is linear: column j is the port output for a unit pulse in bin j
        n = self.grid.n_bins
        cols = []
        for j in range(n):
            amp = np.zeros(n, dtype=complex)
            amp[j] = 1.0
            cols.append(np.stack([t.amp for t in self.optics(PulseTrain(self.grid, amp))]))
        return np.ascontiguousarray(np.stack(cols, axis=-1))

    def port_amplitudes(self, train: PulseTrain) -> np.ndarray:
        """(port, bin) output amplitudes, same as stacking :meth:`optics`."""
        if train.grid == self.grid:
            # elementwise over the few occupied bins, so that equal and opposite
            # paths cancel exactly (a BLAS product may leave rounding residue)
            amp = train.amp
            out = np.zeros(self._response.shape[:2], dtype=complex)
            for j in amp.nonzero()[0]:
                out += self._response[:, :, j] * amp[j]
            return out
        return np.stack([t.amp for t in self.optics(train)])

    def expected_background(self, dark_rate: float) -> float:
        return dark_rate * len(self.ports) * self.work_grid.n_bins

    def decode(
        self,
        train: PulseTrain,
        mode: DetectMode | str = DetectMode.DETERMINISTIC,
        rng: np.random.Generator | None = None,
        dark_rate: float = 0.0,
        gain: float = 1.0,
        offset: float = 0.0,
    ) -> tuple[CompactSymbol | None, DecodeDiagnostics]:
        record = detect_amplitudes(self.port_amplitudes(train), self.ports, mode, dark_rate, rng)
        return self.decide(record, dark_rate, gain, offset)

    def decide(
        self, record: DetectionRecord, dark_rate: float = 0.0, gain: float = 1.0, offset: float = 0.0
    ) -> tuple[CompactSymbol | None, DecodeDiagnostics]:
        L_t = self.params.time_levels
        per_branch = record.counts.reshape(L_t, -1, record.counts.shape[-1])
        bin_sums = per_branch.sum(axis=1)
        branch_totals = bin_sums.sum(axis=1)
        modal = bin_sums.argmax(axis=1).tolist()
        totals = branch_totals.tolist()
        peaks = bin_sums[np.arange(L_t), modal].tolist()
        conc = [p / b if b > 0 else 0.0 for p, b in zip(peaks, totals)]
        total = float(sum(totals))

        t_hat = conc.index(max(conc))
        diag = DecodeDiagnostics(
            matched_branch=t_hat,
            concentrations=tuple(conc),
            modal_bins=tuple(modal),
            bright=0.0,
            dark=0.0,
            total_counts=total,
            branch_totals=tuple(totals),
            branch_tie=conc.count(conc[t_hat]) > 1,
            record=record,
        )
        if total == 0:
            diag.erasure = True
            return None, diag

        # interference lands Delta + t_k after the frame start in the matched branch
        ib = self.grid.delta_bins + self.t_bins[t_hat]
        ports = per_branch[t_hat][:, ib]
        diag.bright, diag.dark = float(ports[0]), float(ports[1])
        if self.quadrature:
            c = []
            for plus, minus in (ports[0:2], ports[2:4]):
                s = plus + minus
                c.append((plus - minus) / s if s > 0 else 0.0)
            diag.phase_tie = c[0] == 0 and c[1] == 0
            phi = math.atan2(c[1], c[0]) % (2 * math.pi)
            step = 2 * math.pi / self.params.phase_levels
            p_hat = int(round(phi / step)) % self.params.phase_levels
        else:
            diag.phase_tie = ports[0] == ports[1]
            phi = 0.0 if ports[0] >= ports[1] else math.pi
            p_hat = 0 if ports[0] >= ports[1] else 1
        diag.phase_estimate = phi

        key = (gain, offset, dark_rate)
        thresholds = self._thresholds.get(key)
        if thresholds is None:
            thresholds = intensity_thresholds(self.params, gain, offset, self.expected_background(dark_rate))
            self._thresholds[key] = thresholds
        i_hat = classify_intensity(total, thresholds)
        return CompactSymbol(i_hat, t_hat, p_hat), diag


def phase_shift_window_all(train: PulseTrain, phi: float) -> PulseTrain:
    """Phase shift applied to every bin (a fixed phase plate in a delay line)."""
    return PulseTrain(train.grid, train.amp * complex(math.cos(phi), math.sin(phi)))


def decode(
    train: PulseTrain,
    params: CodecParams,
    grid: TimeGrid,
    mode: DetectMode | str = DetectMode.DETERMINISTIC,
    rng: np.random.Generator | None = None,
    **kwargs,
) -> tuple[CompactSymbol | None, DecodeDiagnostics]:
    """One-shot convenience wrapper around :class:`Decoder`."""
    return Decoder(params, grid, kwargs.pop("passive_splitter", False)).decode(train, mode, rng, **kwargs)
