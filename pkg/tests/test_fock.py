import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compactcoding import fock


def _poisson_tail(cutoff, mean):
    # independent of scipy: 1 - sum_{n<=cutoff} e^-m m^n / n!
    head = sum(math.exp(-mean) * mean**n / math.factorial(n) for n in range(cutoff + 1))
    return 1.0 - head


def test_number_state_and_vacuum():
    v = fock.number_state(3, 10)
    assert v.amplitudes[3] == 1 and v.norm_squared == 1.0
    assert fock.vacuum(5).amplitudes[0] == 1
    with pytest.raises(IndexError):
        fock.number_state(11, 10)
    with pytest.raises(IndexError):
        fock.number_state(-1, 10)


def test_wrong_length_rejected():
    with pytest.raises(ValueError):
        fock.FockVector(3, np.zeros(3))


def test_creation_and_annihilation_coefficients():
    c = fock.apply_creation(fock.number_state(4, 10))
    assert c.amplitudes[5] == pytest.approx(math.sqrt(5), abs=1e-15)
    a = fock.apply_annihilation(fock.number_state(4, 10))
    assert a.amplitudes[3] == pytest.approx(2.0, abs=1e-15)
    assert np.all(fock.apply_annihilation(fock.vacuum(10)).amplitudes == 0)


def test_creation_at_cutoff_reports_leakage():
    c = fock.apply_creation(fock.number_state(10, 10))
    assert c.norm_squared == 0.0
    assert c.leakage == pytest.approx(11.0)


@pytest.mark.parametrize("n", range(0, 40))
def test_ladder_identities_exact(n):
    cutoff = 40
    v = fock.number_state(n, cutoff)
    aad = fock.apply_annihilation(fock.apply_creation(v)).amplitudes
    ada = fock.apply_creation(fock.apply_annihilation(v)).amplitudes
    assert np.max(np.abs(aad - (n + 1) * v.amplitudes)) < 1e-12
    assert np.max(np.abs(ada - n * v.amplitudes)) < 1e-12
    # [a, a+] = 1 below the cutoff
    assert np.max(np.abs((aad - ada) - v.amplitudes)) < 1e-12


def test_coherent_state_vacuum_probability():
    # P(0) for |alpha|^2 = 1 is e^-1
    v = fock.coherent_state(1.0, 40)
    assert fock.photon_number_distribution(v)[0] == pytest.approx(math.exp(-1), rel=1e-14)
    assert v.amplitudes[3] == pytest.approx(math.exp(-0.5) / math.sqrt(6), rel=1e-13)


def test_coherent_state_phase_convention():
    v = fock.coherent_state(1j, 40)
    assert v.amplitudes[1] == pytest.approx(1j * math.exp(-0.5), abs=1e-15)
    assert v.amplitudes[2] == pytest.approx(-math.exp(-0.5) / math.sqrt(2), abs=1e-15)


def test_coherent_state_leakage_matches_poisson_tail():
    v = fock.coherent_state(3.0, 5)
    assert v.leakage == pytest.approx(_poisson_tail(5, 9.0), rel=1e-10)
    assert v.norm_squared + v.leakage == pytest.approx(1.0, abs=1e-14)


def test_coherent_state_rejects_nan():
    with pytest.raises(ValueError):
        fock.coherent_state(complex(float("nan"), 0))


def test_default_cutoff_covers_large_amplitude():
    v = fock.coherent_state(8.0)
    assert v.cutoff >= 64
    assert v.leakage < 1e-12


@settings(max_examples=50, deadline=None)
@given(
    st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2)
)
def test_displacement_relation(ar, ai, br, bi):
    alpha, beta = complex(ar, ai), complex(br, bi)
    if abs(alpha) > 2 or abs(beta) > 2:
        return
    # |alpha + beta| can reach 4, whose Poisson tail past 40 is ~1e-7
    shifted = fock.apply_displacement(fock.coherent_state(alpha, 40), beta, max_leakage=1e-6)
    target = fock.coherent_state(alpha + beta, 40)
    assert shifted.leakage < 1e-6
    assert fock.fidelity(shifted, target) > 1 - 1e-6
    # D(b)|a> = e^{i Im(b conj a)} |a + b>
    overlap = fock.inner_product(target, shifted)
    expected = complex(math.cos((beta * alpha.conjugate()).imag), math.sin((beta * alpha.conjugate()).imag))
    assert abs(overlap - expected) < 1e-6


def test_displacement_of_vacuum_is_coherent_state():
    out = fock.apply_displacement(fock.vacuum(40), 1.5)
    target = fock.coherent_state(1.5, 40)
    assert np.max(np.abs(out.amplitudes - target.amplitudes)) < 1e-10


def test_displacement_truncation_error():
    with pytest.raises(fock.TruncationError) as info:
        fock.apply_displacement(fock.vacuum(10), 3.0)
    assert info.value.leakage > 1e-8


def test_zero_displacement_is_identity():
    v = fock.coherent_state(0.7, 40)
    assert fock.apply_displacement(v, 0) is v


def test_inner_product_cutoff_mismatch():
    with pytest.raises(ValueError):
        fock.inner_product(fock.vacuum(5), fock.vacuum(6))


def test_normalize_zero_vector():
    with pytest.raises(ValueError):
        fock.FockVector(2, np.zeros(3)).normalized()


def test_orthogonality():
    assert fock.inner_product(fock.number_state(2, 5), fock.number_state(3, 5)) == 0
    assert fock.inner_product(fock.number_state(4, 5), fock.number_state(4, 5)) == 1


def test_repeated_creation_builds_number_state():
    v = fock.vacuum(12)
    for _ in range(5):
        v = fock.apply_creation(v)
    assert v.amplitudes[5] == pytest.approx(math.sqrt(120))
    assert np.allclose(v.normalized().amplitudes, fock.number_state(5, 12).amplitudes)


@pytest.mark.parametrize("alpha", [0.3, 1.0, -1.2 + 0.8j, 2j])
def test_coherent_state_is_annihilation_eigenvector(alpha):
    v = fock.coherent_state(alpha, 40)
    lowered = fock.apply_annihilation(v).amplitudes
    assert np.max(np.abs(lowered - alpha * v.amplitudes)) < 1e-8


def test_coherent_norm_within_tail_bound():
    assert fock.coherent_state(2.0, 40).norm_squared == pytest.approx(1.0, abs=1e-10)
    assert np.array_equal(fock.coherent_state(0, 10).amplitudes, fock.vacuum(10).amplitudes)


def test_coherent_overlap_magnitude():
    rng = np.random.default_rng(12)
    for _ in range(20):
        a, b = complex(*rng.uniform(-1.5, 1.5, 2)), complex(*rng.uniform(-1.5, 1.5, 2))
        overlap = fock.inner_product(fock.coherent_state(a, 40), fock.coherent_state(b, 40))
        assert abs(overlap) == pytest.approx(math.exp(-abs(a - b) ** 2 / 2), abs=1e-10)


def test_distribution_is_poisson():
    from scipy.stats import poisson

    p = fock.photon_number_distribution(fock.coherent_state(1.5, 40))
    assert np.max(np.abs(p - poisson.pmf(np.arange(41), 2.25))) < 1e-14
    assert fock.photon_number_distribution(fock.number_state(3, 5))[3] == 1
    assert not fock.photon_number_distribution(fock.FockVector(3, np.zeros(4))).any()
