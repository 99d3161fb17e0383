"""Unitary quantizations U with |U_xy|^2 = P_xy."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.sparse.csgraph import connected_components
import scipy.sparse as sp

from .errors import (
    ConfigurationError,
    DimensionMismatch,
    NoBlockStructureFound,
    NotUnitary,
    OddDimension,
    VerificationFailed,
)
from .markov import RowStochasticSparse

PROVENANCES = ("doubling_orthogonal", "block_dft", "phase_decorated", "random_bin_rotation", "user_supplied")


@dataclass(frozen=True, eq=False)
class ComplexUnitary:
    matrix: np.ndarray
    provenance: str = "user_supplied"

    def __post_init__(self):
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"unitary must be square, got shape {m.shape}")
        if self.provenance not in PROVENANCES:
            raise ConfigurationError(f"unknown provenance {self.provenance!r}")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.matrix)

    def unitarity_error(self) -> float:
        m = self.matrix
        return float(np.max(np.abs(m.conj().T @ m - np.eye(self.n))))

    def check_unitary(self, tol=1e-10):
        err = self.unitarity_error()
        if err > tol:
            raise NotUnitary(f"max |U*U - I| = {err:.3e} > {tol}")
        return err

    def save(self, path):
        """Write little-endian interleaved (re, im) float64, row-major, plus a JSON sidecar."""
        path = Path(path)
        m = np.ascontiguousarray(self.matrix, dtype=np.complex128)
        m.view(np.float64).astype("<f8").tofile(path)
        sidecar = {"n": self.n, "provenance": self.provenance, "dtype": "complex128-le-interleaved"}
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2))

    @classmethod
    def load(cls, path) -> "ComplexUnitary":
        path = Path(path)
        meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        n = int(meta["n"])
        raw = np.fromfile(path, dtype="<f8")
        if raw.size != 2 * n * n:
            raise DimensionMismatch(f"{path} holds {raw.size} floats, expected {2 * n * n}")
        m = raw.astype(np.float64).view(np.complex128).reshape(n, n)
        return cls(m, meta.get("provenance", "user_supplied"))


def doubling_unitary(n: int) -> ComplexUnitary:
    """Real orthogonal quantization of the doubling map.

    Row x <= n/2 has (1, -1)/sqrt2 on columns (2x-1, 2x); row x + n/2 has
    (1, 1)/sqrt2 on the same columns.
    """
    if n < 2 or n % 2:
        raise OddDimension(f"doubling quantization needs even n, got {n}")
    h = n // 2
    U = np.zeros((n, n))
    s = 1 / np.sqrt(2)
    i = np.arange(h)
    U[i, 2 * i] = s
    U[i, 2 * i + 1] = -s
    U[i + h, 2 * i] = s
    U[i + h, 2 * i + 1] = s
    return ComplexUnitary(U, "doubling_orthogonal")


def apply_phases(U: ComplexUnitary, phi) -> ComplexUnitary:
    """diag(exp(i phi)) @ U."""
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (U.n,):
        raise DimensionMismatch(f"need {U.n} phases, got shape {phi.shape}")
    return ComplexUnitary(np.exp(1j * phi)[:, None] * U.matrix, "phase_decorated")


class UnistochasticCheck(NamedTuple):
    entry_error: float
    unitarity_error: float


def verify_unistochastic(U: ComplexUnitary, P: RowStochasticSparse) -> UnistochasticCheck:
    if U.n != P.n:
        raise DimensionMismatch(f"U is {U.n}x{U.n} but P is {P.n}x{P.n}")
    diff = np.abs(U.matrix) ** 2
    Pf = P.to_float().tocoo()
    diff[Pf.row, Pf.col] -= Pf.data
    return UnistochasticCheck(float(np.max(np.abs(diff))), U.unitarity_error())


def _flat_basis(children_leftovers, q):
    """Combine q equal-length lists of flat orthonormal vectors into q*k flat vectors."""
    k = len(children_leftovers[0])
    F = np.exp(2j * np.pi * np.outer(np.arange(q), np.arange(q)) / q) / np.sqrt(q)
    out = []
    for a in range(q):
        for j in range(k):
            out.append(sum(F[a, i] * children_leftovers[i][j] for i in range(q)))
    return out


def _quantize_component(rows, cols, supports, n, comp_id):
    """Row vectors for one connected block via the nested Fourier construction.

    ``supports`` maps each row to its sorted column tuple.  Distinct supports
    must form a laminar family whose nodes split into equally sized children.
    """
    by_support: dict[frozenset, list[int]] = {}
    for r in rows:
        by_support.setdefault(frozenset(supports[r]), []).append(r)
    nodes = sorted(by_support, key=len)
    col_set = frozenset(cols)
    if nodes[-1] != col_set:
        raise NoBlockStructureFound("no row covers its whole connected block", comp_id)
    for a_i, a in enumerate(nodes):
        for b in nodes[a_i + 1 :]:
            if a & b and not a <= b:
                raise NoBlockStructureFound("row supports overlap without nesting", comp_id)

    children: dict[frozenset, list[frozenset]] = {s: [] for s in nodes}
    for a_i, a in enumerate(nodes[:-1]):
        parent = next(b for b in nodes[a_i + 1 :] if a < b)
        children[parent].append(a)

    vectors: dict[int, np.ndarray] = {}

    def build(node):
        kids = children[node]
        covered = frozenset().union(*kids) if kids else frozenset()
        rest = sorted(node - covered)
        if kids and rest:
            raise NoBlockStructureFound("columns not covered by nested supports", comp_id)
        if kids:
            sizes = {len(c) for c in kids}
            if len(sizes) != 1:
                raise NoBlockStructureFound("child blocks have unequal sizes", comp_id)
            lists = [build(c) for c in kids]
        else:
            lists = []
            for c in rest:
                e = np.zeros(n, dtype=complex)
                e[c] = 1.0
                lists.append([e])
        if len({len(lst) for lst in lists}) != 1 or not lists[0]:
            raise NoBlockStructureFound("unequal spare dimensions across child blocks", comp_id)
        pool = _flat_basis(lists, len(lists))
        owners = by_support[node]
        if len(owners) > len(pool):
            raise NoBlockStructureFound("more rows than available flat vectors", comp_id)
        for r, v in zip(owners, pool):
            vectors[r] = v
        return pool[len(owners) :]

    spare = build(col_set)
    if spare:
        raise NoBlockStructureFound("block leaves unused flat directions", comp_id)
    return vectors


def block_dft_quantize(P: RowStochasticSparse, tol: float = 1e-12) -> ComplexUnitary:
    """Fourier-type quantization of a bistochastic P with uniform rows.

    Each connected block of the bipartite support graph is handled separately.
    Inside a block the distinct row supports must be nested; rows on a support
    of size m receive vectors of modulus 1/sqrt(m) built from discrete Fourier
    characters of the sub-blocks.  When P itself is a permuted direct sum of
    J_m/m blocks this reduces to permuted blockdiag(F_m/sqrt(m)).
    """
    if not P.is_bistochastic():
        raise NoBlockStructureFound("P is not bistochastic")
    n = P.n
    m = P.numerators
    supports, weights_ok = {}, True
    for x in range(n):
        lo, hi = m.indptr[x], m.indptr[x + 1]
        supports[x] = tuple(int(c) for c in m.indices[lo:hi])
        if np.any(m.data[lo:hi] * (hi - lo) != P.denominator):
            weights_ok = False
    if not weights_ok:
        raise NoBlockStructureFound("rows with non-uniform weights cannot be Fourier-quantized")

    graph = sp.bmat([[None, m], [m.T, None]]).tocsr()
    ncomp, labels = connected_components(graph, directed=False)
    U = np.zeros((n, n), dtype=complex)
    for c in range(ncomp):
        rows = [int(i) for i in np.flatnonzero(labels[:n] == c)]
        cols = [int(j) for j in np.flatnonzero(labels[n:] == c)]
        if len(rows) != len(cols):
            raise NoBlockStructureFound("block is not square", c)
        for r, v in _quantize_component(rows, cols, supports, n, c).items():
            U[r] = v

    out = ComplexUnitary(U, "block_dft")
    check = verify_unistochastic(out, P)
    if check.entry_error > tol or check.unitarity_error > tol:
        raise VerificationFailed(
            f"constructed U fails verification: entry error {check.entry_error:.2e}, "
            f"unitarity error {check.unitarity_error:.2e}"
        )
    if np.allclose(U.imag, 0, atol=0):
        out = ComplexUnitary(U.real.copy(), "block_dft")
    return out


@dataclass(frozen=True)
class QuantizationOutcome:
    unitary: ComplexUnitary | None
    failure: str | None = None


def try_block_dft_quantize(P: RowStochasticSparse) -> QuantizationOutcome:
    """Like :func:`block_dft_quantize` but reports failure instead of raising."""
    try:
        return QuantizationOutcome(block_dft_quantize(P))
    except (NoBlockStructureFound, VerificationFailed) as exc:
        return QuantizationOutcome(None, f"{type(exc).__name__}: {exc}")


def quantize(P: RowStochasticSparse, smap=None) -> ComplexUnitary:
    """Default quantization: the real orthogonal one for the doubling map, block-DFT otherwise."""
    if smap is not None and smap.is_doubling:
        return doubling_unitary(P.n)
    return block_dft_quantize(P)
