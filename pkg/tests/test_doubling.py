import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphweyl.doubling import (
    BitStringIndex,
    assign_roots,
    bad_pairs_2k,
    corner_powers,
    degeneracy_profile,
    eigenspace_projection_poly,
    failing_arc,
    failing_coordinate_bound,
    gamma,
    h_delta,
    h_delta_fourier,
    h_delta_fourier_quad,
    power_traces,
    random_eigenbasis_gaussian,
    root_angles,
    series_constant,
    staircase_check,
    staircase_mask,
    tensor_power_identities,
    write_profile_csv,
)
from graphweyl.errors import ConfigurationError, IndexOutOfRange, OddDimension
from graphweyl.interval_map import DOUBLING
from graphweyl.markov import bad_coordinates, build_markov, markov_power_product
from graphweyl.quantize import doubling_unitary
from graphweyl.random_quant import make_rng
from graphweyl.spectral import TWO_PI, ArcWindow, arc_projection, eigendecompose


@pytest.mark.parametrize("K", range(1, 8))
def test_period_against_matrix_power(K):
    U = doubling_unitary(2**K).matrix
    np.testing.assert_allclose(np.linalg.matrix_power(U, 4 * K), (-1) ** K * np.eye(2**K), atol=1e-12)


@pytest.mark.parametrize("K", [1, 2, 3, 6])
def test_identity_report(K):
    rep = tensor_power_identities(K)
    assert rep.passed
    assert max(rep.tensor_error, rep.flip_error, rep.period_error, rep.transpose_error) < 1e-12


@pytest.mark.parametrize("K", [3, 4, 7])
def test_spectrum_on_lattice(K):
    phases = np.mod(np.angle(np.linalg.eigvals(doubling_unitary(2**K).matrix)), TWO_PI)
    _, dev = assign_roots(phases, K)
    assert dev.max() < 1e-8
    if K % 2 == 0:
        assert gamma(K) == 1
    assert np.allclose(np.exp(1j * root_angles(K) * 4 * K), (-1) ** K)


@pytest.mark.parametrize("K", [3, 5])
def test_projections(K):
    n = 2**K
    U = doubling_unitary(n)
    spec = eigendecompose(U)
    total = np.zeros((n, n), dtype=complex)
    width = TWO_PI / (8 * K)
    for j, theta in enumerate(root_angles(K)):
        Pj = eigenspace_projection_poly(U, K, j)
        np.testing.assert_allclose(Pj @ Pj, Pj, atol=1e-10)
        np.testing.assert_allclose(Pj, arc_projection(spec, ArcWindow(theta, width)), atol=1e-10)
        total += Pj
    np.testing.assert_allclose(total, np.eye(n), atol=1e-10)
    with pytest.raises(IndexOutOfRange):
        eigenspace_projection_poly(U, K, 4 * K)


def test_power_traces_against_dense():
    tr = power_traces(6)
    U = doubling_unitary(64).matrix
    dense = [np.trace(np.linalg.matrix_power(U, l)) for l in range(24)]
    np.testing.assert_allclose(tr, dense, atol=1e-10)


@pytest.mark.parametrize("K", [6, 8])
def test_degeneracy_against_eigvals(K):
    prof = degeneracy_profile(K)
    phases = np.mod(np.angle(np.linalg.eigvals(doubling_unitary(2**K).matrix)), TWO_PI)
    j, _ = assign_roots(phases, K)
    assert prof.multiplicities == np.bincount(j, minlength=4 * K).tolist()
    assert sum(prof.multiplicities) == 2**K


def test_degeneracy_near_uniform_k8(tmp_path):
    prof = degeneracy_profile(8)
    assert prof.max_relative_deviation <= 0.5
    path = tmp_path / "deg.csv"
    write_profile_csv([prof], path)
    lines = path.read_text().splitlines()
    assert lines[0] == "K,j,root_angle,multiplicity" and len(lines) == 33


@pytest.mark.parametrize("K", [3, 5, 7])
def test_staircase_mask_matches_markov_support(K):
    P = build_markov(DOUBLING, 2**K)
    for m in range(1, K + 1):
        S = markov_power_product(P, m).to_dense() > 0
        assert np.array_equal(staircase_mask(K, m), S)


@pytest.mark.parametrize("K", [2, 4, 6])
def test_staircase_check(K):
    for m in range(1, K + 1):
        rep = staircase_check(K, m)
        assert rep.a_matches and rep.b_matches and rep.modulus_error < 1e-10


def test_bit_string_index():
    b = BitStringIndex.from_coordinate(6, 4)
    assert b.bits == "0101"
    assert b.shift("1").bits == "1011"
    assert b.is_periodic(2) and not b.is_periodic(1)
    with pytest.raises(IndexOutOfRange):
        BitStringIndex.from_coordinate(17, 4)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 9), st.data())
def test_bit_shift_is_markov_successor(K, data):
    n = 2**K
    x = data.draw(st.integers(1, n))
    P = build_markov(DOUBLING, n)
    assert sorted(BitStringIndex.from_coordinate(x, K).successors()) == [y for y, _ in P.row(x)]


@settings(max_examples=20, deadline=None)
@given(st.integers(3, 10), st.data())
def test_periodic_strings_are_bad(K, data):
    r = data.draw(st.integers(1, K - 1))
    bad = set(bad_coordinates(DOUBLING, 2**K, r).members)
    periodic = {
        x for x in range(1, 2**K + 1) if any(BitStringIndex.from_coordinate(x, K).is_periodic(l) for l in range(1, r + 1))
    }
    assert bad == periodic


def test_bad_pairs_small():
    for K, r in ((4, 1), (6, 2), (8, 3)):
        rep = bad_pairs_2k(K, r)
        assert rep.passed
        assert len(rep.bad_coordinates) <= rep.bad_bound
        assert rep.bad_pair_count <= rep.pair_bound
    with pytest.raises(ConfigurationError):
        bad_pairs_2k(4, 4)


def test_random_eigenbasis():
    res = random_eigenbasis_gaussian(8, make_rng(0))
    assert res.eigen_residual < 1e-9
    assert sum(res.multiplicities) == 256
    assert res.ks_real_max < 0.2


def test_h_delta_shape():
    d = 0.3
    assert h_delta(0, d) == 1 and h_delta(np.pi / 2, d) == 0
    assert h_delta(np.pi / 2 - d / 2, d) == pytest.approx(0.5)
    assert h_delta(TWO_PI, d) == 1


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 1.5), st.integers(0, 30))
def test_h_delta_fourier_against_quad(delta, j):
    assert h_delta_fourier(delta, j) == pytest.approx(h_delta_fourier_quad(delta, j), abs=1e-11)


def test_h_delta_minorant_of_arc():
    t = np.linspace(0, TWO_PI, 2001)
    assert np.all(h_delta(t, 0.2) <= failing_arc().indicator(t))


def test_series_constant_closed_form():
    assert series_constant() == pytest.approx(2 / np.pi * np.arctan(2**-0.5), abs=1e-13)


def test_corner_powers():
    c = corner_powers(2**8, 8)
    np.testing.assert_allclose(c, 2.0 ** (-np.arange(9) / 2), atol=1e-14)
    U = doubling_unitary(12).matrix
    np.testing.assert_allclose(corner_powers(12, 3)[3], np.linalg.matrix_power(U, 3)[0, 0], atol=1e-14)
    with pytest.raises(OddDimension):
        corner_powers(7, 2)


def test_failing_coordinate(spectrum):
    for n in (256, 1024):
        res = failing_coordinate_bound(n, spec=spectrum(n))
        assert res.corner_error < 1e-12
        assert res.consistent
        assert res.exact_value >= 0.89
        assert res.limit_value == pytest.approx(0.5 + 2 / np.pi * np.arctan(2**-0.5))
    assert failing_coordinate_bound(64, exact=False).exact_value is None
