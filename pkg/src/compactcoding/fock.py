"""Single-mode truncated Fock space.

Slow but exact reference for the coherent-amplitude engine in
:mod:`compactcoding.pulse`. Every operation that can push weight past the
cutoff returns the discarded squared norm in ``FockVector.leakage`` instead
of hiding it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln
from scipy.stats import poisson


class TruncationError(ValueError):
    """Raised when an operation leaks more norm past the cutoff than allowed."""

    def __init__(self, message: str, leakage: float):
        super().__init__(message)
        self.leakage = leakage


@dataclass(frozen=True)
class FockVector:
    """Amplitudes c_0..c_cutoff of a single-mode state.

    Attributes:
        cutoff: largest photon number kept.
        amplitudes: complex array of length ``cutoff + 1``.
        leakage: squared norm known to have been lost past the cutoff.
    """

    cutoff: int
    amplitudes: np.ndarray
    leakage: float = 0.0

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.ndim != 1 or amps.shape[0] != self.cutoff + 1:
            raise ValueError(
                f"expected {self.cutoff + 1} amplitudes, got shape {amps.shape}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def normalized(self) -> "FockVector":
        norm = math.sqrt(self.norm_squared)
        if norm == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return FockVector(self.cutoff, self.amplitudes / norm, self.leakage)


def default_cutoff(alpha: complex) -> int:
    """Cutoff large enough that the Poisson tail of |alpha|^2 stays below 1e-12."""
    mean = abs(alpha) ** 2
    return max(40, math.ceil(mean + 10.0 * math.sqrt(mean + 1.0)))


def number_state(n: int, cutoff: int) -> FockVector:
    if not 0 <= n <= cutoff:
        raise IndexError(f"photon number {n} outside [0, {cutoff}]")
    amps = np.zeros(cutoff + 1, dtype=complex)
    amps[n] = 1.0
    return FockVector(cutoff, amps)


def vacuum(cutoff: int) -> FockVector:
    return number_state(0, cutoff)


def apply_creation(v: FockVector) -> FockVector:
    """a-dagger; the amplitude pushed past the cutoff is added to the leakage."""
    c = v.amplitudes
    out = np.zeros_like(c)
    n = np.arange(v.cutoff)
    out[1:] = np.sqrt(n + 1) * c[:-1]
    dropped = (v.cutoff + 1) * abs(c[-1]) ** 2
    return FockVector(v.cutoff, out, v.leakage + float(dropped))


def apply_annihilation(v: FockVector) -> FockVector:
    c = v.amplitudes
    out = np.zeros_like(c)
    n = np.arange(1, v.cutoff + 1)
    out[:-1] = np.sqrt(n) * c[1:]
    return FockVector(v.cutoff, out, v.leakage)


def coherent_state(alpha: complex, cutoff: int | None = None) -> FockVector:
    """Truncated expansion exp(-|a|^2/2) sum a^n/sqrt(n!) |n>.

    The reported leakage is the exact Poisson tail beyond the cutoff.
    """
    alpha = complex(alpha)
    if not (math.isfinite(alpha.real) and math.isfinite(alpha.imag)):
        raise ValueError(f"non-finite amplitude {alpha!r}")
    if cutoff is None:
        cutoff = default_cutoff(alpha)
    n = np.arange(cutoff + 1)
    mean = abs(alpha) ** 2
    if alpha == 0:
        amps = np.zeros(cutoff + 1, dtype=complex)
        amps[0] = 1.0
        return FockVector(cutoff, amps)
    # log-space magnitudes avoid overflow of alpha^n / sqrt(n!) at large n
    log_mag = -mean / 2 + n * math.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    amps = np.exp(log_mag) * np.exp(1j * n * np.angle(alpha))
    return FockVector(cutoff, amps, float(poisson.sf(cutoff, mean)))


def _generator(beta: complex, cutoff: int) -> np.ndarray:
    """Matrix of beta a-dagger - conj(beta) a on the truncated space."""
    sq = np.sqrt(np.arange(1, cutoff + 1))
    create = np.diag(sq, k=-1).astype(complex)
    return beta * create - np.conj(beta) * create.T


def apply_displacement(
    v: FockVector, beta: complex, max_leakage: float = 1e-8, pad: int = 40
) -> FockVector:
    """D(beta) v via dense matrix exponential.

    The truncated generator is anti-Hermitian, so its exponential is unitary
    and would hide truncation error. The state is therefore displaced in a
    space ``pad`` levels larger and the weight landing above the original
    cutoff is reported as leakage.
    """
    beta = complex(beta)
    if beta == 0:
        return v
    big = v.cutoff + pad
    padded = np.zeros(big + 1, dtype=complex)
    padded[: v.cutoff + 1] = v.amplitudes
    out = expm(_generator(beta, big)) @ padded
    lost = float(np.vdot(out[v.cutoff + 1 :], out[v.cutoff + 1 :]).real)
    if lost > max_leakage:
        raise TruncationError(
            f"displacement by {beta} leaks {lost:.3e} past cutoff {v.cutoff}", lost
        )
    return FockVector(v.cutoff, out[: v.cutoff + 1], v.leakage + lost)


def photon_number_distribution(v: FockVector) -> np.ndarray:
    return np.abs(v.amplitudes) ** 2


def inner_product(v: FockVector, w: FockVector) -> complex:
    if v.cutoff != w.cutoff:
        raise ValueError(f"cutoff mismatch: {v.cutoff} vs {w.cutoff}")
    return complex(np.vdot(v.amplitudes, w.amplitudes))


def fidelity(v: FockVector, w: FockVector) -> float:
    """|<v|w>|^2 for pure states."""
    return abs(inner_product(v, w)) ** 2
