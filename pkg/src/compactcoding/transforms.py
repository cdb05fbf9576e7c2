"""Secret transforms: intensity shift, late-pulse delay and a phase pair.

The three modulators act on disjoint degrees of freedom, so any two
transforms commute and the set forms an abelian group under component-wise
addition. To keep the group laws exact (not just up to rounding) phases are
stored as integer ticks of 2*pi / 2**32 and intensity shifts as rationals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .pulse import (
    PulseTrain,
    TimeGrid,
    Window,
    WindowViolation,
    delay_window,
    intensity_shift,
    shift,
)

PHASE_TICKS = 2**32
_TWO_PI = 2 * math.pi


def radians_to_ticks(phi: float) -> int:
    return int(round(phi / _TWO_PI * PHASE_TICKS)) % PHASE_TICKS


def ticks_to_radians(ticks: int) -> float:
    return ticks * _TWO_PI / PHASE_TICKS


@dataclass(frozen=True)
class SecretTransform:
    """(dN, dD, alpha, beta): photons added, S-window delay in bins, F and S phases.

    Phases are held as ticks in [0, 2**32); use :meth:`from_radians` to build
    one from angles and the ``alpha``/``beta`` properties to read radians.
    """

    dN: Fraction = Fraction(0)
    dD: int = 0
    alpha_ticks: int = 0
    beta_ticks: int = 0

    def __post_init__(self):
        if type(self.dN) is not Fraction:
            object.__setattr__(self, "dN", Fraction(self.dN))
        object.__setattr__(self, "dD", int(self.dD))
        object.__setattr__(self, "alpha_ticks", int(self.alpha_ticks) % PHASE_TICKS)
        object.__setattr__(self, "beta_ticks", int(self.beta_ticks) % PHASE_TICKS)

    @classmethod
    def from_radians(cls, dN=0, dD: int = 0, alpha: float = 0.0, beta: float = 0.0) -> "SecretTransform":
        return cls(Fraction(dN), dD, radians_to_ticks(alpha), radians_to_ticks(beta))

    @property
    def alpha(self) -> float:
        return ticks_to_radians(self.alpha_ticks)

    @property
    def beta(self) -> float:
        return ticks_to_radians(self.beta_ticks)

    def is_identity(self) -> bool:
        return self == IDENTITY

    def to_dict(self) -> dict:
        return {
            "dN": str(self.dN),
            "dD": self.dD,
            "alpha_ticks": self.alpha_ticks,
            "beta_ticks": self.beta_ticks,
        }


IDENTITY = SecretTransform()


def compose(t1: SecretTransform, t2: SecretTransform) -> SecretTransform:
    return SecretTransform(
        t1.dN + t2.dN,
        t1.dD + t2.dD,
        t1.alpha_ticks + t2.alpha_ticks,
        t1.beta_ticks + t2.beta_ticks,
    )


def invert(t: SecretTransform) -> SecretTransform:
    return SecretTransform(-t.dN, -t.dD, -t.alpha_ticks, -t.beta_ticks)


@dataclass(frozen=True)
class TransformPolicy:
    """Sampling sets for random transforms.

    ``dn_range`` is an inclusive integer photon range, ``delay_choices`` are
    bin delays, and ``phase_choices`` lists allowed phases in ticks (``None``
    means uniform over the whole circle).
    """

    dn_range: tuple[int, int] = (0, 0)
    delay_choices: tuple[int, ...] = (0,)
    phase_choices: tuple[int, ...] | None = None

    def __post_init__(self):
        lo, hi = self.dn_range
        if hi < lo:
            raise ValueError(f"empty intensity range {self.dn_range}")
        if not self.delay_choices:
            raise ValueError("empty delay set")
        if self.phase_choices is not None and not self.phase_choices:
            raise ValueError("empty phase set")

    @classmethod
    def default(cls, grid: TimeGrid, max_dn: int) -> "TransformPolicy":
        """dN on 0..max_dn, delays {0, T/4, T/2} (those on the grid), uniform phases."""
        delays = sorted({grid.to_bins(0.5) * k // 2 for k in range(3)})
        return cls((0, int(max_dn)), tuple(delays), None)

    @classmethod
    def degenerate(cls) -> "TransformPolicy":
        return cls((0, 0), (0,), (0,))


def sample_transform(rng: np.random.Generator, policy: TransformPolicy) -> SecretTransform:
    """Draw dN, dD and both phases independently and uniformly from ``policy``."""
    u = rng.random(4)
    lo, hi = policy.dn_range
    dn = lo + min(int(u[0] * (hi - lo + 1)), hi - lo)
    delays = policy.delay_choices
    dd = delays[min(int(u[1] * len(delays)), len(delays) - 1)]
    if policy.phase_choices is None:
        a, b = int(u[2] * PHASE_TICKS), int(u[3] * PHASE_TICKS)
    else:
        pc = policy.phase_choices
        a = pc[min(int(u[2] * len(pc)), len(pc) - 1)]
        b = pc[min(int(u[3] * len(pc)), len(pc) - 1)]
    return SecretTransform(Fraction(dn), dd, a, b)


def apply_transform(
    train: PulseTrain, t: SecretTransform, bounds: tuple[float, float] = (0.0, math.inf)
) -> PulseTrain:
    """Intensity shift, S-window delay, then F and S phase shifts."""
    x = intensity_shift(train, float(t.dN), bounds)
    x = delay_window(x, Window.S, t.dD)
    return _phase_windows(x, t.alpha_ticks, t.beta_ticks)


def _phase_windows(train: PulseTrain, alpha_ticks: int, beta_ticks: int) -> PulseTrain:
    # both window phase shifts in one pass
    if not alpha_ticks and not beta_ticks:
        return train
    f = train.grid.window(Window.F)
    s = train.grid.window(Window.S)
    a, b = ticks_to_radians(alpha_ticks), ticks_to_radians(beta_ticks)
    amp = train.amp.copy()
    amp[f] *= complex(math.cos(a), math.sin(a))
    amp[s] *= complex(math.cos(b), math.sin(b))
    return PulseTrain._raw(train.grid, amp)


def undo_delay_on_early(train: PulseTrain, d_bins: int) -> PulseTrain:
    """Cancel an earlier S-window delay by delaying P1 instead.

    The early pulse is held back ``d_bins`` inside F, then the receiving
    clock is re-referenced to the new P1 arrival, which is the same as
    pulling S earlier by ``d_bins``.
    """
    if d_bins == 0:
        return train
    if d_bins < 0:
        return delay_window(train, Window.S, -d_bins)
    x = delay_window(train, Window.F, d_bins)
    s = train.grid.window(Window.S)
    early_late = train.amp[s.start : s.start + d_bins].nonzero()[0]
    if early_late.size:
        b = int(early_late[0]) + s.start - d_bins
        raise WindowViolation(f"re-referencing moves P2 to bin {b}, before the S window", b)
    return shift(x, -d_bins)


def negate(
    train: PulseTrain, t: SecretTransform, bounds: tuple[float, float] = (0.0, math.inf)
) -> PulseTrain:
    """Remove ``t`` the way the hardware does: photons off, P1 delayed, phases undone."""
    x = intensity_shift(train, -float(t.dN), bounds)
    x = undo_delay_on_early(x, t.dD)
    return _phase_windows(x, -t.alpha_ticks % PHASE_TICKS, -t.beta_ticks % PHASE_TICKS)


@dataclass(frozen=True)
class WindowReport:
    ok: bool
    offenders: tuple[int, ...] = ()
    message: str = ""


def validate_windows(train: PulseTrain, grid: TimeGrid | None = None) -> WindowReport:
    """Check that P1 sits in F, P2 in S, and nothing lies beyond the frame."""
    grid = grid or train.grid
    nz = train.nonzero_bins()
    f = grid.window(Window.F)
    s = grid.window(Window.S)
    outside = [int(b) for b in nz if b >= s.stop]
    if outside:
        return WindowReport(False, tuple(outside), f"pulse energy past the frame end at bins {outside}")
    in_f = [b for b in nz if f.start <= b < f.stop]
    in_s = [b for b in nz if s.start <= b < s.stop]
    if nz.size and not in_f:
        return WindowReport(False, tuple(int(b) for b in in_s), "no early pulse in the F window")
    return WindowReport(True)


def max_delay_stack(grid: TimeGrid, delays: Sequence[int]) -> WindowReport:
    """Window check for a late pulse carrying the sum of ``delays`` (in bins)."""
    late = grid.delta_bins + sum(delays)
    if late >= grid.frame_bins:
        return WindowReport(False, (late,), f"stacked delay puts P2 at bin {late}")
    return WindowReport(True)
