"""Markov matrices P_n of interval maps, their powers, supports and short loops.

Matrices are kept exact: an int64 CSR matrix of numerators over one common
integer denominator.  Coordinates in the public API are 1-based.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from .errors import (
    BoundViolated,
    CutoffTooLarge,
    DimensionMismatch,
    IndexOutOfRange,
    InvariantViolation,
    MultiplePathsFound,
    NotBistochastic,
    NotMultipleOfM0,
    PowerBeyondEhrenfest,
)
from .interval_map import PiecewiseLinearMap, k_tilde

_INT_LIMIT = 2**62


@dataclass(frozen=True, eq=False)
class RowStochasticSparse:
    """Exact sparse matrix ``numerators / denominator``."""

    numerators: sp.csr_matrix
    denominator: int

    def __post_init__(self):
        m = self.numerators
        m.sort_indices()
        m.eliminate_zeros()

    @property
    def n(self) -> int:
        return self.numerators.shape[0]

    @property
    def nnz(self) -> int:
        return self.numerators.nnz

    def entry(self, x: int, y: int) -> Fraction:
        _check_index(x, self.n)
        _check_index(y, self.n)
        return Fraction(int(self.numerators[x - 1, y - 1]), self.denominator)

    def row(self, x: int) -> list[tuple[int, Fraction]]:
        """Sorted ``(column, weight)`` pairs of row x."""
        _check_index(x, self.n)
        m = self.numerators
        lo, hi = m.indptr[x - 1], m.indptr[x]
        return [(int(c) + 1, Fraction(int(v), self.denominator)) for c, v in zip(m.indices[lo:hi], m.data[lo:hi])]

    @property
    def rows(self):
        return [self.row(x) for x in range(1, self.n + 1)]

    def diagonal_support(self) -> np.ndarray:
        """1-based coordinates x with a nonzero diagonal entry."""
        return np.flatnonzero(self.numerators.diagonal()) + 1

    def to_float(self) -> sp.csr_matrix:
        return (self.numerators.astype(float) / self.denominator).tocsr()

    def to_dense(self) -> np.ndarray:
        return self.numerators.toarray() / self.denominator

    def is_bistochastic(self) -> bool:
        m = self.numerators
        rows = np.asarray(m.sum(axis=1)).ravel()
        cols = np.asarray(m.sum(axis=0)).ravel()
        return bool(np.all(rows == self.denominator) and np.all(cols == self.denominator))

    def reduced(self) -> "RowStochasticSparse":
        g = self.denominator
        if self.nnz:
            g = math.gcd(g, int(np.gcd.reduce(self.numerators.data)))
        if g == 1:
            return self
        return RowStochasticSparse((self.numerators // g).tocsr(), self.denominator // g)

    def __matmul__(self, other: "RowStochasticSparse") -> "RowStochasticSparse":
        if self.n != other.n:
            raise DimensionMismatch(f"{self.n} vs {other.n}")
        den = self.denominator * other.denominator
        if den >= _INT_LIMIT:
            raise OverflowError("denominator exceeds int64 range; reduce the power")
        # entries of the product are bounded by den since both factors are stochastic
        prod = (self.numerators @ other.numerators).tocsr()
        return RowStochasticSparse(prod, den).reduced()

    def __eq__(self, other):
        if not isinstance(other, RowStochasticSparse) or self.n != other.n:
            return NotImplemented
        a, b = self.reduced(), other.reduced()
        if a.denominator != b.denominator:
            return False
        return (a.numerators != b.numerators).nnz == 0

    __hash__ = None

    def to_csv(self, path):
        m = self.numerators.tocoo()
        order = np.lexsort((m.col, m.row))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row", "col", "num", "den"])
            for k in order:
                f = Fraction(int(m.data[k]), self.denominator)
                w.writerow([int(m.row[k]) + 1, int(m.col[k]) + 1, f.numerator, f.denominator])

    @classmethod
    def from_csv(cls, path, n: int) -> "RowStochasticSparse":
        entries = []
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                entries.append((int(rec["row"]), int(rec["col"]), Fraction(int(rec["num"]), int(rec["den"]))))
        den = math.lcm(*(f.denominator for _, _, f in entries)) if entries else 1
        rows = np.array([r - 1 for r, _, _ in entries], dtype=np.int64)
        cols = np.array([c - 1 for _, c, _ in entries], dtype=np.int64)
        vals = np.array([int(f * den) for _, _, f in entries], dtype=np.int64)
        return cls(sp.csr_matrix((vals, (rows, cols)), shape=(n, n)), den)

    @classmethod
    def identity(cls, n: int) -> "RowStochasticSparse":
        return cls(sp.identity(n, dtype=np.int64, format="csr"), 1)


def _check_index(x, n):
    if not 1 <= x <= n:
        raise IndexOutOfRange(f"coordinate {x} outside [1, {n}]")


def _check_n(smap: PiecewiseLinearMap, n: int):
    if n <= 0 or n % smap.m0:
        raise NotMultipleOfM0(f"n = {n} is not a positive multiple of m0 = {smap.m0}")


def _image_matrix(smap: PiecewiseLinearMap, n: int, ell: int) -> RowStochasticSparse:
    """P with (P)_{xy} = 1/|(S^ell)'| wherever S^ell(E_x) meets E_y.

    Only meaningful when S^ell is affine on every cell E_x.
    """
    den = smap.constants.l0**ell
    if den >= _INT_LIMIT:
        raise OverflowError("l0**ell exceeds int64 range")
    rows, cols, vals = [], [], []
    for x in range(1, n + 1):
        slope, lo, hi = smap.cell_image(n, x, ell)
        a, b = lo * n, hi * n
        if a.denominator != 1 or b.denominator != 1:
            raise InvariantViolation(f"S^{ell}(E_{x}) = ({lo}, {hi}) is not a union of cells")
        width = int(b - a)
        rows.append(np.full(width, x - 1))
        cols.append(np.arange(int(a), int(b)))
        vals.append(np.full(width, den // abs(slope)))
    m = sp.csr_matrix(
        (np.concatenate(vals).astype(np.int64), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    return RowStochasticSparse(m, den)


def build_markov(smap: PiecewiseLinearMap, n: int) -> RowStochasticSparse:
    """Transition matrix of S on the uniform n-cell partition."""
    _check_n(smap, n)
    P = _image_matrix(smap, n, 1)
    if not P.is_bistochastic():
        raise NotBistochastic(f"P_{n} built from {smap.name or 'map'} is not bistochastic")
    return P.reduced()


def markov_power_product(P: RowStochasticSparse, ell: int) -> RowStochasticSparse:
    """P^ell by repeated exact sparse multiplication."""
    if ell < 0:
        raise IndexOutOfRange("power must be nonnegative")
    out = RowStochasticSparse.identity(P.n)
    for _ in range(ell):
        out = out @ P
    return out


def markov_power_closed_form(smap: PiecewiseLinearMap, n: int, ell: int) -> RowStochasticSparse:
    _check_n(smap, n)
    horizon = k_tilde(smap, n) + 1
    if not 1 <= ell <= horizon:
        raise PowerBeyondEhrenfest(f"ell = {ell} outside [1, {horizon}]")
    return _image_matrix(smap, n, ell).reduced()


def markov_power(P: RowStochasticSparse, smap: PiecewiseLinearMap, ell: int, beyond_horizon: bool = False):
    """P^ell, cross-checked against the closed form inside the exact horizon.

    With ``beyond_horizon=True`` powers past K̃(n)+1 are returned from plain
    multiplication without the closed-form check.
    """
    if ell == 0:
        return RowStochasticSparse.identity(P.n)
    horizon = k_tilde(smap, P.n) + 1
    product = markov_power_product(P, ell)
    if ell > horizon:
        if not beyond_horizon:
            raise PowerBeyondEhrenfest(f"ell = {ell} exceeds K̃(n)+1 = {horizon}")
        return product
    closed = markov_power_closed_form(smap, P.n, ell)
    if product != closed:
        raise InvariantViolation(f"closed form and product disagree for ell = {ell}")
    return product


def iter_powers(P: RowStochasticSparse, ell_max: int):
    """Yield (ell, P^ell) for ell = 1..ell_max."""
    cur = P
    for ell in range(1, ell_max + 1):
        if ell > 1:
            cur = cur @ P
        yield ell, cur


def _doubling_horizon(smap, n):
    if smap.is_doubling and n % 2 == 0:
        return max(int(math.floor(math.log2(n))), k_tilde(smap, n) + 1)
    return k_tilde(smap, n) + 1


@dataclass(frozen=True)
class SupportReport:
    ell: int
    diag_nonzeros: int
    total_nonzeros: int
    diag_bound: int
    total_bound: int
    exact_total: int | None = None

    def to_dict(self):
        return dict(self.__dict__)


def _support_of(Pl: RowStochasticSparse, smap, n, ell) -> SupportReport:
    c = smap.constants
    diag = int(np.count_nonzero(Pl.numerators.diagonal()))
    total = Pl.nnz
    if ell == 0:
        return SupportReport(0, diag, total, n, n, n)
    diag_bound = 2 * c.m0 * c.l0 ** (ell - 1)
    total_bound = n * c.s_max**ell
    exact = n * 2**ell if smap.is_doubling else None
    if diag > diag_bound:
        raise BoundViolated(f"ell={ell}: {diag} diagonal nonzeros > {diag_bound}")
    if total > total_bound:
        raise BoundViolated(f"ell={ell}: {total} nonzeros > {total_bound}")
    if exact is not None and total != exact:
        raise BoundViolated(f"ell={ell}: {total} nonzeros, expected exactly {exact}")
    return SupportReport(ell, diag, total, diag_bound, total_bound, exact)


def support_report(smap: PiecewiseLinearMap, n: int, ell: int) -> SupportReport:
    _check_n(smap, n)
    if ell == 0:
        return _support_of(RowStochasticSparse.identity(n), smap, n, 0)
    horizon = _doubling_horizon(smap, n)
    if ell > horizon:
        raise PowerBeyondEhrenfest(f"ell = {ell} exceeds {horizon}")
    P = build_markov(smap, n)
    return _support_of(markov_power(P, smap, ell, beyond_horizon=True), smap, n, ell)


def support_reports(smap: PiecewiseLinearMap, n: int, ell_max: int | None = None) -> list[SupportReport]:
    """Support reports for every ell up to the horizon, sharing one power chain."""
    _check_n(smap, n)
    horizon = _doubling_horizon(smap, n)
    ell_max = horizon if ell_max is None else ell_max
    if ell_max > horizon:
        raise PowerBeyondEhrenfest(f"ell = {ell_max} exceeds {horizon}")
    P = build_markov(smap, n)
    return [_support_of(Pl, smap, n, ell) for ell, Pl in iter_powers(P, ell_max)]


@dataclass(frozen=True)
class BadCoordinateSet:
    r: int
    n: int
    members: tuple[int, ...]
    bound: int
    first_loop: dict = field(default_factory=dict, compare=False)

    @property
    def good(self) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        mask[np.asarray(self.members, dtype=int) - 1] = False
        return np.flatnonzero(mask) + 1

    def __len__(self):
        return len(self.members)

    def __contains__(self, x):
        return x in set(self.members)

    def to_dict(self):
        return {"r": self.r, "n": self.n, "size": len(self.members), "bound": self.bound, "members": list(self.members)}


def bad_set_bound(smap: PiecewiseLinearMap, r: int) -> int:
    c = smap.constants
    if c.l0 == 1:
        return 2 * c.m0 * r
    return 2 * c.m0 * (c.l0**r - 1) // (c.l0 - 1)


def bad_coordinates(smap: PiecewiseLinearMap, n: int, r: int) -> BadCoordinateSet:
    """Coordinates x with (P^ell)_{xx} != 0 for some 1 <= ell <= r."""
    _check_n(smap, n)
    limit = int(math.floor(math.log2(n))) if (smap.is_doubling and n % 2 == 0) else k_tilde(smap, n)
    if r > limit:
        raise CutoffTooLarge(f"r = {r} exceeds {limit}")
    first = {}
    if r >= 1:
        P = build_markov(smap, n)
        for ell, Pl in iter_powers(P, r):
            for x in Pl.diagonal_support():
                first.setdefault(int(x), ell)
    members = tuple(sorted(first))
    bound = bad_set_bound(smap, r)
    if len(members) > bound:
        raise BoundViolated(f"#B = {len(members)} exceeds {bound}")
    return BadCoordinateSet(r, n, members, bound, first)


def _successors(P: RowStochasticSparse):
    m = P.numerators
    return [m.indices[m.indptr[i] : m.indptr[i + 1]] for i in range(P.n)]


def enumerate_paths(P: RowStochasticSparse, x: int, ell: int) -> dict[int, list[list[int]]]:
    """All length-ell walks from x, keyed by endpoint (1-based nodes)."""
    _check_index(x, P.n)
    succ = _successors(P)
    out: dict[int, list[list[int]]] = {}
    stack = [(x - 1, [])]
    while stack:
        node, path = stack.pop()
        if len(path) == ell:
            out.setdefault(node + 1, []).append([p + 1 for p in path[:-1]])
            continue
        for nxt in succ[node]:
            stack.append((int(nxt), path + [int(nxt)]))
    return out


def unique_path(P: RowStochasticSparse, x: int, y: int, ell: int) -> list[int] | None:
    """The intermediate nodes tau_1..tau_{ell-1} of the walk x -> y, or None.

    Raises :class:`MultiplePathsFound` if more than one walk exists.
    """
    _check_index(y, P.n)
    if ell < 1:
        raise IndexOutOfRange("ell must be at least 1")
    paths = enumerate_paths(P, x, ell).get(y, [])
    if len(paths) > 1:
        raise MultiplePathsFound(f"{len(paths)} walks of length {ell} from {x} to {y}")
    return paths[0] if paths else None


def check_path_uniqueness(P: RowStochasticSparse, ell: int) -> int:
    """Exhaustively confirm at most one walk per pair; returns the number of connected pairs."""
    pairs = 0
    for x in range(1, P.n + 1):
        for y, paths in enumerate_paths(P, x, ell).items():
            if len(paths) > 1:
                raise MultiplePathsFound(f"{len(paths)} walks of length {ell} from {x} to {y}")
            pairs += 1
    return pairs
