from fractions import Fraction

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from graphweyl.errors import DimensionMismatch, NoBlockStructureFound, NotUnitary, OddDimension
from graphweyl.interval_map import BLOCK_DOUBLING, DOUBLING, FOUR_LEGS
from graphweyl.markov import RowStochasticSparse, build_markov
from graphweyl.quantize import (
    ComplexUnitary,
    apply_phases,
    block_dft_quantize,
    doubling_unitary,
    quantize,
    try_block_dft_quantize,
    verify_unistochastic,
)

from conftest import block_maps

S = 1 / np.sqrt(2)


def from_dense(num, den):
    return RowStochasticSparse(sp.csr_matrix(np.asarray(num, dtype=np.int64)), den)


def test_doubling_n2():
    U = doubling_unitary(2).matrix
    np.testing.assert_allclose(U, [[S, -S], [S, S]], atol=1e-15)


def test_doubling_n4_rows():
    U = doubling_unitary(4).matrix
    np.testing.assert_allclose(U[0], [S, -S, 0, 0], atol=1e-15)
    np.testing.assert_allclose(U[1], [0, 0, S, -S], atol=1e-15)
    np.testing.assert_allclose(U[2], [S, S, 0, 0], atol=1e-15)
    np.testing.assert_allclose(U[3], [0, 0, S, S], atol=1e-15)


@pytest.mark.parametrize("n", [2, 6, 64, 1024])
def test_doubling_unistochastic(n):
    U = doubling_unitary(n)
    assert U.is_real
    chk = verify_unistochastic(U, build_markov(DOUBLING, n))
    assert chk.entry_error <= 1e-14 and chk.unitarity_error <= 1e-14


def test_doubling_odd():
    with pytest.raises(OddDimension):
        doubling_unitary(5)


def test_phases_keep_unistochastic():
    n = 16
    rng = np.random.default_rng(3)
    V = apply_phases(doubling_unitary(n), rng.uniform(0, 2 * np.pi, n))
    assert V.provenance == "phase_decorated"
    chk = verify_unistochastic(V, build_markov(DOUBLING, n))
    assert chk.entry_error < 1e-14 and chk.unitarity_error < 1e-14
    with pytest.raises(DimensionMismatch):
        apply_phases(doubling_unitary(n), np.zeros(3))


@pytest.mark.parametrize("smap,n", [(DOUBLING, 8), (DOUBLING, 48), (FOUR_LEGS, 16), (FOUR_LEGS, 256), (BLOCK_DOUBLING, 64)])
def test_block_dft_builtins(smap, n):
    P = build_markov(smap, n)
    U = block_dft_quantize(P)
    chk = verify_unistochastic(U, P)
    assert chk.entry_error < 1e-12 and chk.unitarity_error < 1e-12


def test_block_dft_identity_is_diagonal_unit():
    P = from_dense(np.eye(5, dtype=int), 1)
    U = block_dft_quantize(P).matrix
    np.testing.assert_allclose(np.abs(U), np.eye(5), atol=1e-15)


def test_block_dft_direct_sum_is_fourier():
    # P = J_3/3 (+) J_2/2, permuted
    perm = [3, 0, 4, 1, 2]
    J = np.zeros((5, 5), dtype=int)
    J[np.ix_([0, 1, 2], [0, 1, 2])] = 2
    J[np.ix_([3, 4], [3, 4])] = 3
    J = J[perm][:, perm]
    U = block_dft_quantize(from_dense(J, 6)).matrix
    np.testing.assert_allclose(np.abs(U) ** 2, J / 6, atol=1e-14)


def test_no_block_structure():
    P = from_dense([[1, 1, 0], [0, 1, 1], [1, 0, 1]], 2)
    with pytest.raises(NoBlockStructureFound):
        block_dft_quantize(P)
    out = try_block_dft_quantize(P)
    assert out.unitary is None and "NoBlockStructureFound" in out.failure


def test_nonuniform_rows_rejected():
    P = from_dense([[1, 2, 0], [2, 1, 0], [0, 0, 3]], 3)
    with pytest.raises(NoBlockStructureFound):
        block_dft_quantize(P)


def test_wrong_unitary_against_doubling():
    chk = verify_unistochastic(ComplexUnitary(np.eye(2)), build_markov(DOUBLING, 2))
    assert chk.entry_error == pytest.approx(0.5)
    # at n=4 the identity puts mass 1 on (2, 2) where P vanishes
    assert verify_unistochastic(ComplexUnitary(np.eye(4)), build_markov(DOUBLING, 4)).entry_error == 1
    assert chk.unitarity_error == 0


def test_quantize_dispatch():
    assert quantize(build_markov(DOUBLING, 8), DOUBLING).provenance == "doubling_orthogonal"
    assert quantize(build_markov(FOUR_LEGS, 16), FOUR_LEGS).provenance == "block_dft"


def test_check_unitary():
    with pytest.raises(NotUnitary):
        ComplexUnitary(2 * np.eye(3)).check_unitary()
    with pytest.raises(DimensionMismatch):
        ComplexUnitary(np.zeros((2, 3)))


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    U = apply_phases(block_dft_quantize(build_markov(FOUR_LEGS, 16)), rng.uniform(0, 6, 16))
    path = tmp_path / "u.bin"
    U.save(path)
    assert path.stat().st_size == 16 * 16 * 16
    V = ComplexUnitary.load(path)
    assert V.provenance == "phase_decorated"
    np.testing.assert_array_equal(V.matrix, U.matrix)


@settings(max_examples=30, deadline=None)
@given(block_maps(), st.integers(1, 2))
def test_block_dft_property(smap, power):
    c = smap.constants
    n = c.m0 * c.l0**power
    P = build_markov(smap, n)
    U = block_dft_quantize(P)
    chk = verify_unistochastic(U, P)
    assert chk.entry_error < 1e-12 and chk.unitarity_error < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=5), st.randoms(use_true_random=False))
def test_permuted_direct_sums(sizes, rnd):
    n = sum(sizes)
    L = int(np.lcm.reduce(sizes))
    J = np.zeros((n, n), dtype=np.int64)
    start = 0
    for m in sizes:
        J[start : start + m, start : start + m] = L // m
        start += m
    p, q = list(range(n)), list(range(n))
    rnd.shuffle(p)
    rnd.shuffle(q)
    J = J[p][:, q]
    P = from_dense(J, L)
    U = block_dft_quantize(P)
    assert verify_unistochastic(U, P).entry_error < 1e-13
