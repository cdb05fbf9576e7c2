"""Coherent pulse trains on a discrete time grid.

Every optical element used by the codec and the protocols is linear, so a
coherent input stays coherent and one complex amplitude per time bin
describes it exactly. Photon statistics only appear at detection, where the
count in a bin is Poisson with mean ``|amp|**2`` (plus dark counts).

Time is measured in units of the slot period T. The frame is two windows of
length Delta: F holds the early pulse P1 and S holds the late pulse P2.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class Window(str, enum.Enum):
    F = "F"
    S = "S"


class DetectMode(str, enum.Enum):
    DETERMINISTIC = "deterministic"
    STOCHASTIC = "stochastic"


class WindowViolation(ValueError):
    """A pulse would leave the window (or grid) it must stay in."""

    def __init__(self, message: str, offending_bin: int):
        super().__init__(message)
        self.offending_bin = offending_bin


class IntensityRangeError(ValueError):
    pass


class UndefinedPhaseError(ValueError):
    """Raised when brightening a vacuum train: there is no phase to keep."""


@dataclass(frozen=True)
class TimeGrid:
    """Quantized frame clock.

    ``bins_per_slot`` bins make one slot T, the windows F and S are each
    ``delta_slots`` slots long, and ``extra_bins`` of overflow follow the
    frame (only decoder delay lines use them).
    """

    bins_per_slot: int = 4
    delta_slots: int = 2
    extra_bins: int = 0
    delta_bins: int = field(init=False, repr=False, compare=False)
    frame_bins: int = field(init=False, repr=False, compare=False)
    n_bins: int = field(init=False, repr=False, compare=False)
    _windows: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.bins_per_slot < 2 or self.bins_per_slot % 2:
            raise ValueError("bins_per_slot must be even so that T/2 lies on the grid")
        if self.delta_slots < 1:
            raise ValueError("delta_slots must be positive")
        if self.extra_bins < 0:
            raise ValueError("extra_bins must be non-negative")
        delta = self.bins_per_slot * self.delta_slots
        f, sw = slice(0, delta), slice(delta, 2 * delta)
        for name, value in (
            ("delta_bins", delta),
            ("frame_bins", 2 * delta),
            ("n_bins", 2 * delta + self.extra_bins),
            ("_windows", {Window.F: f, Window.S: sw, "F": f, "S": sw}),
        ):
            object.__setattr__(self, name, value)

    @property
    def bin_width(self) -> float:
        return 1.0 / self.bins_per_slot

    def window(self, w: Window | str) -> slice:
        try:
            return self._windows[w]
        except KeyError:
            raise ValueError(f"unknown window {w!r}") from None

    def to_bins(self, time: float) -> int:
        """Convert a time in units of T to a bin count; off-grid times are rejected."""
        exact = time * self.bins_per_slot
        b = round(exact)
        if not math.isclose(exact, b, abs_tol=1e-9):
            raise ValueError(f"time {time}T is not a multiple of the bin width {self.bin_width}T")
        return int(b)

    def padded(self, extra_bins: int) -> "TimeGrid":
        return TimeGrid(self.bins_per_slot, self.delta_slots, extra_bins)


class PulseTrain:
    """Complex coherent amplitude per bin (units of sqrt(photons))."""

    __slots__ = ("grid", "amp")

    def __init__(self, grid: TimeGrid, amp):
        amp = np.asarray(amp, dtype=complex)
        if amp.shape != (grid.n_bins,):
            raise ValueError(f"amplitude shape {amp.shape} does not match {grid.n_bins} bins")
        self.grid = grid
        self.amp = amp

    @classmethod
    def _raw(cls, grid: TimeGrid, amp: np.ndarray) -> "PulseTrain":
        # internal: amp is already a complex array of the right length
        self = object.__new__(cls)
        self.grid = grid
        self.amp = amp
        return self

    @classmethod
    def vacuum(cls, grid: TimeGrid) -> "PulseTrain":
        return cls(grid, np.zeros(grid.n_bins, dtype=complex))

    def copy(self) -> "PulseTrain":
        return PulseTrain(self.grid, self.amp.copy())

    def nonzero_bins(self) -> np.ndarray:
        return self.amp.nonzero()[0]

    def __repr__(self):
        nz = self.nonzero_bins()
        body = ", ".join(f"{b}: {self.amp[b]:.4g}" for b in nz)
        return f"PulseTrain({{{body}}})"


def _same_grid(a: PulseTrain, b: PulseTrain):
    if a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid} vs {b.grid}")


def make_pulse_pair(grid: TimeGrid, amp_early: complex, amp_late: complex, late_bin: int) -> PulseTrain:
    s = grid.window(Window.S)
    if not s.start <= late_bin < s.stop:
        raise WindowViolation(f"late bin {late_bin} outside S window [{s.start}, {s.stop})", late_bin)
    amp = np.zeros(grid.n_bins, dtype=complex)
    amp[0] = amp_early
    amp[late_bin] = amp_late
    return PulseTrain._raw(grid, amp)


def total_mean_photons(train: PulseTrain) -> float:
    a = train.amp
    return float(np.dot(a.real, a.real) + np.dot(a.imag, a.imag))


def phase_shift_window(train: PulseTrain, window: Window | str, phi: float) -> PulseTrain:
    if phi == 0:
        return train
    amp = train.amp.copy()
    amp[train.grid.window(window)] *= complex(math.cos(phi), math.sin(phi))
    return PulseTrain._raw(train.grid, amp)


def delay_window(train: PulseTrain, window: Window | str, delta_bins: int) -> PulseTrain:
    """Move the content of one window by ``delta_bins`` (negative = earlier)."""
    if delta_bins == 0:
        return train
    w = train.grid.window(window)
    seg = train.amp[w]
    nz = seg.nonzero()[0]
    moved = nz + delta_bins
    bad = moved[(moved < 0) | (moved >= seg.shape[0])]
    if bad.size:
        b = int(bad[0]) + w.start
        raise WindowViolation(
            f"delay of {delta_bins} bins moves a pulse to bin {b}, outside window {Window(window).value}", b
        )
    amp = train.amp.copy()
    new = np.zeros_like(seg)
    new[moved] = seg[nz]
    amp[w] = new
    return PulseTrain._raw(train.grid, amp)


def shift(train: PulseTrain, delta_bins: int) -> PulseTrain:
    """Shift the whole train in time; used for clock re-referencing and delay lines."""
    if delta_bins == 0:
        return train
    nz = train.nonzero_bins()
    moved = nz + delta_bins
    bad = moved[(moved < 0) | (moved >= train.grid.n_bins)]
    if bad.size:
        raise WindowViolation(f"shift by {delta_bins} moves a pulse to bin {int(bad[0])}", int(bad[0]))
    amp = np.zeros_like(train.amp)
    amp[moved] = train.amp[nz]
    return PulseTrain._raw(train.grid, amp)


def pad(train: PulseTrain, grid: TimeGrid) -> PulseTrain:
    """Re-host a train on a larger grid with the same clock origin."""
    if grid.n_bins < train.grid.n_bins:
        raise ValueError("target grid is smaller than the source grid")
    amp = np.zeros(grid.n_bins, dtype=complex)
    amp[: train.grid.n_bins] = train.amp
    return PulseTrain._raw(grid, amp)


def intensity_shift(train: PulseTrain, delta_n: float, bounds: tuple[float, float]) -> PulseTrain:
    """Add ``delta_n`` mean photons while keeping every per-bin phase.

    Amplitudes are rescaled by sqrt((N + delta_n) / N); the result must lie
    in ``bounds = (n_i, n_f)``.
    """
    if delta_n == 0:
        return train
    n = total_mean_photons(train)
    target = n + delta_n
    lo, hi = bounds
    if n == 0.0:
        raise UndefinedPhaseError("cannot shift the intensity of a vacuum train")
    if not lo - 1e-9 <= target <= hi + 1e-9:
        raise IntensityRangeError(f"mean photon number {target:.6g} outside [{lo}, {hi}]")
    return PulseTrain._raw(train.grid, train.amp * math.sqrt(max(target, 0.0) / n))


def attenuate(train: PulseTrain, eta: float) -> PulseTrain:
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"transmittance {eta} outside [0, 1]")
    if eta == 1.0:
        return train
    return PulseTrain._raw(train.grid, train.amp * math.sqrt(eta))


_INV_SQRT2 = 1.0 / math.sqrt(2.0)


def combine_50_50(a: PulseTrain, b: PulseTrain) -> tuple[PulseTrain, PulseTrain]:
    """Lossless beam splitter; returns the (a+b)/sqrt2 and (a-b)/sqrt2 ports."""
    _same_grid(a, b)
    return (
        PulseTrain._raw(a.grid, (a.amp + b.amp) * _INV_SQRT2),
        PulseTrain._raw(a.grid, (a.amp - b.amp) * _INV_SQRT2),
    )


def split(train: PulseTrain, n: int) -> list[PulseTrain]:
    """Balanced lossless 1:n splitter; each output carries 1/n of the photons."""
    if n < 1:
        raise ValueError("splitter needs at least one output")
    amp = train.amp / math.sqrt(n)
    return [PulseTrain._raw(train.grid, amp) for _ in range(n)]


def gated_route(train: PulseTrain, boundary_bin: int) -> tuple[PulseTrain, PulseTrain]:
    """Time-gated switch: bins before ``boundary_bin`` go to the first output."""
    early = np.zeros_like(train.amp)
    late = np.zeros_like(train.amp)
    early[:boundary_bin] = train.amp[:boundary_bin]
    late[boundary_bin:] = train.amp[boundary_bin:]
    return PulseTrain._raw(train.grid, early), PulseTrain._raw(train.grid, late)


@dataclass(frozen=True)
class DetectionRecord:
    """Counts per (detector, bin).

    Deterministic records hold expectation values as floats; stochastic ones
    hold integer Poisson samples.
    """

    detectors: tuple[str, ...]
    counts: np.ndarray
    mode: DetectMode

    def __getitem__(self, detector: str) -> np.ndarray:
        return self.counts[self.detectors.index(detector)]

    def total(self) -> float:
        return float(self.counts.sum())

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "counts": {d: self[d].tolist() for d in self.detectors},
        }


def detect_many(
    trains: Sequence[PulseTrain],
    detectors: Sequence[str],
    mode: DetectMode | str,
    dark_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> DetectionRecord:
    """Time-resolved photon counting on several detectors at once."""
    if len(trains) != len(detectors):
        raise ValueError("one detector id per train is required")
    return detect_amplitudes(np.stack([t.amp for t in trains]), detectors, mode, dark_rate, rng)


def detect_amplitudes(
    amps: np.ndarray,
    detectors: Sequence[str],
    mode: DetectMode | str,
    dark_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> DetectionRecord:
    """Like :func:`detect_many` for a (detector, bin) amplitude array."""
    mode = DetectMode(mode)
    if amps.shape[0] != len(detectors):
        raise ValueError("one detector id per amplitude row is required")
    means = amps.real**2 + amps.imag**2
    if dark_rate:
        means = means + dark_rate
    if mode is DetectMode.DETERMINISTIC:
        counts = means
    else:
        if rng is None:
            raise ValueError("stochastic detection needs a random generator")
        counts = rng.poisson(means)
    return DetectionRecord(tuple(detectors), counts, mode)


def detect(
    train: PulseTrain,
    mode: DetectMode | str,
    dark_rate: float = 0.0,
    rng: np.random.Generator | None = None,
    detector: str = "d0",
) -> DetectionRecord:
    return detect_many([train], [detector], mode, dark_rate, rng)
