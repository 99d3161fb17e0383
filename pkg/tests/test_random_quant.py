import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats
from scipy.stats import unitary_group

from graphweyl.errors import ConfigurationError, EmptyBin, SplitWindowTooLarge
from graphweyl.interval_map import DOUBLING
from graphweyl.markov import build_markov
from graphweyl.quantize import doubling_unitary
from graphweyl.random_quant import (
    GAUSS_SCALE,
    _expected_truncated_distance,
    build_random_quantization,
    complex_gaussian,
    coordinate_measure,
    default_kappa,
    gaussian_distance,
    gaussian_distance_columns,
    haar_random_unitary,
    ks_normal,
    lipschitz_deviation,
    make_rng,
    min_phase_gap,
    que_deviation,
    random_bin_vector,
    verify_random_quantization,
)
from graphweyl.spectral import TWO_PI, ArcWindow, eigendecompose


def test_rng_streams():
    a = make_rng(7, 1).standard_normal(5)
    assert np.array_equal(a, make_rng(7, 1).standard_normal(5))
    assert not np.array_equal(a, make_rng(7, 2).standard_normal(5))
    with pytest.raises(ConfigurationError):
        make_rng(None)


def test_complex_gaussian_moments():
    z = complex_gaussian(make_rng(1), 200_000)
    assert np.mean(np.abs(z) ** 2) == pytest.approx(1, abs=0.01)
    assert abs(np.mean(z**2)) < 0.01


def test_haar_small():
    rng = make_rng(0)
    u = haar_random_unitary(1, rng)
    assert u.shape == (1, 1) and abs(abs(u[0, 0]) - 1) < 1e-14
    W = haar_random_unitary(30, rng)
    np.testing.assert_allclose(W.conj().T @ W, np.eye(30), atol=1e-12)


def test_haar_moments():
    rng = make_rng(2)
    d = 4
    samples = np.array([haar_random_unitary(d, rng) for _ in range(4000)])
    assert np.mean(np.abs(samples[:, 0, 0]) ** 2) == pytest.approx(1 / d, abs=0.01)
    # E|u_11|^4 = 2/(d(d+1)) for Haar measure
    assert np.mean(np.abs(samples[:, 0, 0]) ** 4) == pytest.approx(2 / (d * (d + 1)), abs=0.01)
    assert abs(np.mean(np.trace(samples, axis1=1, axis2=2))) < 0.05


def test_ks_against_scipy():
    x = make_rng(3).standard_normal(1000) * GAUSS_SCALE
    ours = float(ks_normal(x))
    ref = stats.kstest(x, stats.norm(scale=GAUSS_SCALE).cdf).statistic
    assert ours == pytest.approx(ref, abs=1e-14)
    cols = make_rng(4).standard_normal((300, 5))
    ref_cols = [stats.kstest(cols[:, j], "norm", args=(0, GAUSS_SCALE)).statistic for j in range(5)]
    np.testing.assert_allclose(ks_normal(cols), ref_cols, atol=1e-14)


def test_ks_point_mass():
    assert float(ks_normal(np.zeros(100))) == pytest.approx(0.5)


def test_ks_large_sample():
    z = complex_gaussian(make_rng(5), 1_000_000)
    rep = gaussian_distance(z)
    assert rep.ks_real <= 0.002 and rep.ks_imag <= 0.002
    assert rep.lip_max <= 0.003


def test_truncated_distance_monte_carlo():
    z = complex_gaussian(make_rng(6), 2_000_000)
    for c in (0, 1, 1 + 1j):
        mc = np.minimum(1, np.abs(z - c)).mean()
        assert _expected_truncated_distance(abs(c)) == pytest.approx(mc, abs=2e-3)


def test_coordinate_measure_requires_unit():
    with pytest.raises(ConfigurationError):
        coordinate_measure(np.ones(4))
    m = coordinate_measure(np.ones(4) / 2)
    np.testing.assert_allclose(m.values, 1)


def test_random_bin_vector(spectrum):
    spec = spectrum(1024)
    arc = ArcWindow(np.pi, np.pi)
    v = random_bin_vector(spec, arc, make_rng(8))
    assert np.linalg.norm(v) == pytest.approx(1)
    # lies in the spectral subspace of the arc
    B = spec.vectors[:, arc.contains(spec.phases)]
    np.testing.assert_allclose(B @ (B.conj().T @ v), v, atol=1e-10)
    rep = gaussian_distance(coordinate_measure(v), dimension=B.shape[1])
    assert rep.ks_real < 0.1 and rep.ks_imag < 0.1
    with pytest.raises(EmptyBin):
        random_bin_vector(eigendecompose(np.eye(3)), ArcWindow(3, 0.1), make_rng(0))


def test_gaussian_columns_match_single():
    V = unitary_group.rvs(50, random_state=1)
    batch = gaussian_distance_columns(V, chunk=7)
    for j in (0, 13, 49):
        single = gaussian_distance(coordinate_measure(V[:, j]))
        assert batch.ks_real[j] == pytest.approx(single.ks_real)
        assert batch.lip[j] == pytest.approx(single.lip_max)
    np.testing.assert_allclose(lipschitz_deviation(np.sqrt(50) * V), batch.lip)


def test_fine_bins_leave_simple_spectrum_fixed():
    U = unitary_group.rvs(20, random_state=4)
    spec = eigendecompose(U)
    assert min_phase_gap(spec.phases) > 4 * TWO_PI / 100_000
    q = build_random_quantization(spec, 100_000, seed=1)
    assert q.split_clusters == 0
    np.testing.assert_allclose(q.V.matrix, U, atol=1e-10)
    assert q.norm_diff < 1e-10


def test_root_aligned_bins(spectrum):
    n = 256
    spec = spectrum(n)
    q = build_random_quantization(spec, 4 * 8, seed=3)
    assert q.split_clusters > 0
    assert min_phase_gap(q.spectral.phases) > 1e-12
    np.testing.assert_allclose(q.V.matrix.conj().T @ q.V.matrix, np.eye(n), atol=1e-10)


def test_deterministic(spectrum):
    spec = spectrum(64)
    a = build_random_quantization(spec, 3, seed=11)
    b = build_random_quantization(spec, 3, seed=11)
    c = build_random_quantization(spec, 3, seed=12)
    assert np.array_equal(a.V.matrix, b.V.matrix)
    assert not np.array_equal(a.V.matrix, c.V.matrix)


def test_split_window_too_large(spectrum):
    with pytest.raises(SplitWindowTooLarge):
        build_random_quantization(spectrum(64), 4, epsilon_split=2.0, seed=0)


def test_default_kappa():
    assert default_kappa(DOUBLING, 4096) == 3
    assert default_kappa(DOUBLING, 16) == 2


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2**31))
def test_norm_and_bins_property(kappa, seed):
    n = 64
    spec = eigendecompose(doubling_unitary(n))
    q = build_random_quantization(spec, kappa, seed=seed)
    width = TWO_PI / kappa
    assert q.norm_diff <= 2 * width + 1e-10
    # dense oracle for the norm
    assert np.linalg.norm(q.V.matrix - doubling_unitary(n).matrix, 2) == pytest.approx(q.norm_diff, abs=1e-9)
    new_bins = np.floor(np.mod(q.spectral.phases, TWO_PI) / width + 1e-12).astype(int) % kappa
    assert np.array_equal(new_bins, q.bins)
    assert min_phase_gap(q.spectral.phases) > 1e-12
    np.testing.assert_allclose(
        (q.spectral.vectors * np.exp(1j * q.spectral.phases)) @ q.spectral.vectors.conj().T, q.V.matrix, atol=1e-10
    )


def test_verify_report(spectrum):
    n = 256
    U = doubling_unitary(n)
    q = build_random_quantization(spectrum(n), 3, seed=5)
    rep = verify_random_quantization(q, U, build_markov(DOUBLING, n), DOUBLING, ["cos(2pi x)"], spec_U=spectrum(n))
    assert rep["a"]["passed"] and rep["d"]["passed"] and rep["e"]["passed"]
    assert all(r["passed"] for r in rep["a"]["egorov"])
    assert rep["c"][0]["max_deviation"] == pytest.approx(que_deviation(q.spectral, "cos(2pi x)"))
    assert rep["b"]["count"] == n
