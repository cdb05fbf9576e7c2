import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import poisson

from compactcoding.codec import (
    CodecParams,
    CompactSymbol,
    ConfigurationError,
    Decoder,
    FramingError,
    bits_to_symbol,
    bits_to_symbols,
    classify_intensity,
    decode,
    encode_symbol,
    intensity_thresholds,
    symbol_to_bits,
)
from compactcoding.pulse import DetectMode, PulseTrain, TimeGrid, total_mean_photons

GRID = TimeGrid()
BINARY = CodecParams()
QUAD = CodecParams((4.0, 8.0, 12.0, 16.0), 4, 4)

# bit string -> (intensity, time in T, phase)
TABLE = {
    "000": (0, 0.0, 0.0),
    "001": (0, 0.0, math.pi),
    "010": (0, 0.5, 0.0),
    "011": (0, 0.5, math.pi),
    "100": (1, 0.0, 0.0),
    "101": (1, 0.0, math.pi),
    "110": (1, 0.5, 0.0),
    "111": (1, 0.5, math.pi),
}


@pytest.mark.parametrize("word", sorted(TABLE))
def test_table_mapping(word):
    sym = bits_to_symbol([int(c) for c in word], BINARY)
    i, t, phi = TABLE[word]
    assert sym.i_level == i
    assert BINARY.time_delay(sym.t_level) == t
    assert BINARY.phase(sym.p_level) == phi
    assert "".join(map(str, symbol_to_bits(sym, BINARY))) == word


def test_multilevel_field_layout():
    assert QUAD.field_widths == (2, 2, 2)
    assert QUAD.bits_per_symbol == 6
    assert symbol_to_bits(CompactSymbol(3, 2, 1), QUAD) == [1, 1, 1, 0, 0, 1]
    assert QUAD.time_bins(GRID) == [0, 1, 2, 3]


def test_params_validation():
    with pytest.raises(ValueError):
        CodecParams((4.0, 16.0), 3, 2)
    with pytest.raises(ValueError):
        CodecParams((16.0, 4.0))
    with pytest.raises(ValueError):
        CodecParams((0.0, 4.0))
    with pytest.raises(ConfigurationError):
        CodecParams((4.0, 16.0), 8, 2).time_bins(GRID)


def test_framing_and_level_errors():
    with pytest.raises(FramingError):
        bits_to_symbols([1, 0], BINARY)
    with pytest.raises(IndexError):
        symbol_to_bits(CompactSymbol(2, 0, 0), BINARY)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=6, max_size=6).map(lambda b: b * 4))
def test_bits_round_trip(bits):
    syms = bits_to_symbols(bits, QUAD)
    assert [b for s in syms for b in symbol_to_bits(s, QUAD)] == bits


def test_encoder_amplitudes():
    p = encode_symbol(CompactSymbol(1, 1, 1), BINARY, GRID)
    assert p.nonzero_bins().tolist() == [0, 10]
    assert total_mean_photons(p) == pytest.approx(16.0)
    assert p.amp[0] == pytest.approx(math.sqrt(8))
    assert p.amp[10] == pytest.approx(-math.sqrt(8))


def test_threshold_value():
    # 12 / ln 4 for levels 4 and 16
    (n_star,) = intensity_thresholds(BINARY)
    assert n_star == pytest.approx(8.656170245333781, rel=1e-14)


def test_threshold_is_likelihood_crossing():
    (n_star,) = intensity_thresholds(BINARY)
    below, above = math.floor(n_star), math.ceil(n_star)
    assert poisson.pmf(below, 4) > poisson.pmf(below, 16)
    assert poisson.pmf(above, 4) < poisson.pmf(above, 16)
    assert classify_intensity(below, [n_star]) == 0
    assert classify_intensity(above, [n_star]) == 1


def test_threshold_with_gain_offset_and_background():
    (n_star,) = intensity_thresholds(BINARY, gain=0.5, offset=4.0, background=1.0)
    a, b = 0.5 * 8 + 1, 0.5 * 20 + 1
    assert n_star == pytest.approx((b - a) / math.log(b / a))


def test_threshold_zero_rate():
    # a zero lower rate only yields zero counts, so any positive count is the upper level
    th = intensity_thresholds(BINARY, gain=1.0, offset=-4.0)
    assert 0 < th[0] < 1
    with pytest.raises(ConfigurationError):
        intensity_thresholds(BINARY, gain=0.0)


@pytest.mark.parametrize("params", [BINARY, QUAD], ids=["binary", "quad"])
@pytest.mark.parametrize("passive", [False, True])
def test_deterministic_round_trip_all_symbols(params, passive):
    dec = Decoder(params, GRID, passive_splitter=passive)
    for sym in params.alphabet():
        out, diag = dec.decode(encode_symbol(sym, params, GRID))
        assert out == sym, (sym, diag)
        assert not diag.branch_tie


@settings(max_examples=30, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False), min_size=16, max_size=16))
def test_precomputed_response_matches_optics(values):
    train = PulseTrain(GRID, np.array(values))
    for dec in (Decoder(BINARY, GRID), Decoder(QUAD, GRID, passive_splitter=True)):
        direct = np.stack([t.amp for t in dec.optics(train)])
        assert np.max(np.abs(dec.port_amplitudes(train) - direct)) < 1e-12


def test_decoder_conserves_photons():
    dec = Decoder(QUAD, GRID)
    sym = CompactSymbol(2, 3, 1)
    _, diag = dec.decode(encode_symbol(sym, QUAD, GRID))
    assert diag.total_counts == pytest.approx(12.0, rel=1e-12)


@pytest.mark.parametrize("phi", [0.0, math.pi / 2, math.pi, 3 * math.pi / 2])
def test_matched_branch_interference(phi):
    from compactcoding.codec import pulse_pair

    dec = Decoder(BINARY, GRID)
    _, diag = dec.decode(pulse_pair(GRID, 16.0, 2, phi))
    assert diag.matched_branch == 1
    # the matched branch holds 8 of the 16 photons, all of them interfering:
    # bright:dark = (1 + cos):(1 - cos)
    assert diag.bright + diag.dark == pytest.approx(8.0, abs=1e-12)
    assert diag.bright == pytest.approx(4 * (1 + math.cos(phi)), abs=1e-12)
    assert diag.dark == pytest.approx(4 * (1 - math.cos(phi)), abs=1e-12)


def test_erasure_on_vacuum():
    sym, diag = decode(PulseTrain.vacuum(GRID), BINARY, GRID)
    assert sym is None and diag.erasure


def test_time_tie_picks_lowest_branch():
    # a train with no late pulse gives every branch the same concentration
    amp = np.zeros(GRID.n_bins, complex)
    amp[0] = 2.0
    _, diag = Decoder(BINARY, GRID).decode(PulseTrain(GRID, amp))
    assert diag.branch_tie and diag.matched_branch == 0


def test_stochastic_decoding_bright_levels():
    # at a few hundred photons shot noise no longer confuses any field
    params = CodecParams((100.0, 400.0))
    rng = np.random.default_rng(3)
    dec = Decoder(params, GRID)
    errors = 0
    for _ in range(50):
        for sym in params.alphabet():
            out, _ = dec.decode(encode_symbol(sym, params, GRID), DetectMode.STOCHASTIC, rng)
            errors += out != sym
    assert errors == 0


def test_stochastic_counts_unbiased():
    rng = np.random.default_rng(5)
    dec = Decoder(BINARY, GRID)
    train = encode_symbol(CompactSymbol(1, 0, 0), BINARY, GRID)
    totals = [dec.decode(train, DetectMode.STOCHASTIC, rng)[1].total_counts for _ in range(4000)]
    assert abs(np.mean(totals) - 16.0) < 5 * math.sqrt(16.0 / 4000)


@pytest.mark.parametrize("levels", [(2, 2, 2), (4, 2, 8), (8, 8, 8)])
def test_bijection_exhaustive(levels):
    li, lt, lp = levels
    params = CodecParams(tuple(float(4 * (k + 1)) for k in range(li)), lt, lp)
    k = params.bits_per_symbol
    seen = set()
    for value in range(2**k):
        bits = [(value >> (k - 1 - j)) & 1 for j in range(k)]
        sym = bits_to_symbol(bits, params)
        assert symbol_to_bits(sym, params) == bits
        seen.add(sym)
    assert len(seen) == params.alphabet_size == li * lt * lp


def test_table_encoder_examples():
    low = encode_symbol(CompactSymbol(0, 0, 0), BINARY, GRID)
    assert np.allclose(low.amp[[0, 8]], [math.sqrt(2), math.sqrt(2)])
    flipped = encode_symbol(CompactSymbol(0, 0, 1), BINARY, GRID)
    assert flipped.amp[8] == pytest.approx(-math.sqrt(2))


def test_dark_port_empty_for_zero_phase():
    _, diag = Decoder(BINARY, GRID).decode(encode_symbol(CompactSymbol(0, 1, 0), BINARY, GRID))
    assert diag.dark == 0.0


def test_mismatched_branch_concentration_half():
    _, diag = Decoder(BINARY, GRID).decode(encode_symbol(CompactSymbol(1, 1, 0), BINARY, GRID))
    assert diag.matched_branch == 1
    assert diag.concentrations[1] == pytest.approx(1.0)
    assert diag.concentrations[0] == pytest.approx(0.5)


def test_equal_levels_rejected():
    with pytest.raises(ValueError):
        CodecParams((4.0, 4.0))


@pytest.mark.parametrize("params", [BINARY, QUAD, CodecParams((2.0, 5.0, 9.0, 30.0))], ids=["binary", "quad", "uneven"])
def test_expected_counts_classify_to_own_level(params):
    th = intensity_thresholds(params)
    for i, mu in enumerate(params.intensity_levels):
        assert classify_intensity(mu, th) == i


@pytest.mark.parametrize("params", [BINARY, QUAD], ids=["binary", "quad"])
def test_energy_accounting_all_symbols(params):
    dec = Decoder(params, GRID)
    for sym in params.alphabet():
        _, diag = dec.decode(encode_symbol(sym, params, GRID))
        assert diag.total_counts == pytest.approx(params.mean_photons(sym.i_level), abs=1e-12)
        assert all(0.0 <= c <= 1.0 for c in diag.concentrations)
