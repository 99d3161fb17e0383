"""Exact structure of the doubling-map quantization.

For n = 2^K the real orthogonal quantization U satisfies U^{4K} = (-1)^K I, so
its spectrum sits on a rotated lattice of 4K-th roots of unity and spectral
projections are polynomials in U.  Coordinates are 1-based throughout.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import integrate

from .errors import (
    BoundViolated,
    ConfigurationError,
    EigensolverFailure,
    IdentityViolated,
    IndexOutOfRange,
    NonIntegerTrace,
    OddDimension,
    PatternViolated,
)
from .quantize import doubling_unitary
from .random_quant import GaussianDistanceReport, gaussian_distance_columns, haar_random_unitary
from .spectral import TWO_PI, ArcWindow, SpectralData, eigendecompose, pointwise_weyl

MAX_K = 13
SUPPORT_TOL = 1e-10


def _check_K(K, max_K=MAX_K):
    if not 1 <= K <= max_K:
        raise ConfigurationError(f"K must lie in [1, {max_K}], got {K}")


# --- binary strings ----------------------------------------------------------------


@dataclass(frozen=True)
class BitStringIndex:
    """Coordinate x in [1, 2^K] written as the K-bit binary expansion of x - 1."""

    K: int
    bits: str

    def __post_init__(self):
        if len(self.bits) != self.K or set(self.bits) - {"0", "1"}:
            raise ConfigurationError(f"bits must be a {self.K}-character 0/1 string")

    @classmethod
    def from_coordinate(cls, x: int, K: int) -> "BitStringIndex":
        if not 1 <= x <= 2**K:
            raise IndexOutOfRange(f"coordinate {x} outside [1, {2**K}]")
        return cls(K, format(x - 1, f"0{K}b") if K else "")

    @property
    def coordinate(self) -> int:
        return int(self.bits, 2) + 1 if self.K else 1

    def shift(self, new_bit: str) -> "BitStringIndex":
        """Drop the leading bit and append ``new_bit``: the action of S on cells."""
        return BitStringIndex(self.K, self.bits[1:] + new_bit)

    def successors(self) -> tuple[int, int]:
        return self.shift("0").coordinate, self.shift("1").coordinate

    def is_periodic(self, ell: int) -> bool:
        """True when S^ell maps this cell over itself: bits[i] == bits[i + ell] for i < K - ell."""
        b = self.bits
        return all(b[i] == b[i + ell] for i in range(self.K - ell))


def gamma(K: int) -> complex:
    """Lattice offset: exp(i pi / 4K) for odd K, 1 for even K."""
    return complex(np.exp(1j * np.pi / (4 * K))) if K % 2 else 1.0 + 0j


def root_angles(K: int) -> np.ndarray:
    return np.mod(np.angle(gamma(K)) + TWO_PI * np.arange(4 * K) / (4 * K), TWO_PI)


def assign_roots(phases, K: int, tol: float | None = None):
    """Nearest root index for each phase; raises if any phase is farther than tol."""
    tol = TWO_PI / (16 * K) if tol is None else tol
    step = TWO_PI / (4 * K)
    x = (np.asarray(phases) - np.angle(gamma(K))) / step
    j = np.mod(np.round(x).astype(int), 4 * K)
    dev = np.abs(np.angle(np.exp(1j * (np.asarray(phases) - root_angles(K)[j]))))
    if np.any(dev > tol):
        raise EigensolverFailure(f"eigenphase {float(dev.max()):.2e} away from the root lattice")
    return j, dev


# --- n = 2^K algebra ---------------------------------------------------------------


def _sparse_doubling(n):
    return sp.csr_matrix(doubling_unitary(n).matrix)


def _tensor(block, K):
    out = np.ones((1, 1))
    for _ in range(K):
        out = np.kron(out, block)
    return out


@dataclass
class IdentityReport:
    K: int
    tensor_error: float
    flip_error: float
    period_error: float
    transpose_error: float | None
    passed: bool

    def to_dict(self):
        return dict(self.__dict__)


def tensor_power_identities(K: int, tol: float = 1e-10, transpose_max_K: int = 10) -> IdentityReport:
    """Check the closed forms of U^K, U^{2K}, U^{4K} and the transpose relation.

    The relation U^r = (-1)^K (U^{4K-r})^T is checked for every r when
    K <= ``transpose_max_K`` (it needs all 4K powers in memory).
    """
    _check_K(K)
    n = 2**K
    Us = _sparse_doubling(n)
    keep = K <= transpose_max_K
    powers = [np.eye(n)] if keep else None
    cur = np.eye(n)
    tensor_err = flip_err = 0.0
    for r in range(1, 4 * K + 1):
        cur = Us @ cur
        if keep:
            powers.append(cur)
        if r == K:
            tensor_err = float(np.max(np.abs(cur - 2 ** (-K / 2) * _tensor(np.array([[1, -1], [1, 1]]), K))))
        elif r == 2 * K:
            flip_err = float(np.max(np.abs(cur - _tensor(np.array([[0, -1], [1, 0]]), K))))
    sign = (-1) ** K
    period_err = float(np.max(np.abs(cur - sign * np.eye(n))))
    transpose_err = None
    if keep:
        transpose_err = max(
            float(np.max(np.abs(powers[r] - sign * powers[4 * K - r].T))) for r in range(1, 4 * K)
        )
    errs = [tensor_err, flip_err, period_err] + ([transpose_err] if keep else [])
    rep = IdentityReport(K, tensor_err, flip_err, period_err, transpose_err, max(errs) <= tol)
    if not rep.passed:
        raise IdentityViolated(f"K={K}: power identities fail (max error {max(errs):.2e})")
    return rep


def _projection_coefficient(K, j):
    return np.exp(-2j * np.pi * j / (4 * K)) * np.conj(gamma(K))


def eigenspace_projection_poly(U, K: int, j: int) -> np.ndarray:
    """(1/4K) sum_{l<4K} (e^{-2 pi i j/4K} conj(gamma))^l U^l, evaluated by Horner's rule."""
    _check_K(K)
    if not 0 <= j < 4 * K:
        raise IndexOutOfRange(f"j must lie in [0, {4 * K - 1}], got {j}")
    M = getattr(U, "matrix", U)
    n = M.shape[0]
    if n != 2**K:
        raise ConfigurationError(f"U has dimension {n}, expected 2^{K}")
    Us = sp.csr_matrix(M)
    z = _projection_coefficient(K, j)
    R = np.eye(n, dtype=complex)
    for _ in range(4 * K - 1):
        R = z * (Us @ R)
        R[np.diag_indices(n)] += 1
    return R / (4 * K)


def power_traces(K: int) -> np.ndarray:
    """tr U^l for l = 0..4K-1; these lie in Z[sqrt 2], not Z in general."""
    _check_K(K)
    n = 2**K
    Us = _sparse_doubling(n)
    out = np.empty(4 * K)
    out[0] = n
    cur = Us.copy()
    for ell in range(1, 4 * K):
        out[ell] = cur.diagonal().sum()
        if ell < K:
            cur = Us @ cur
        elif ell == K:
            cur = Us @ cur.toarray()
        else:
            cur = Us @ cur
        if ell >= K:
            cur = np.asarray(cur)
    return out


@dataclass
class DegeneracyProfile:
    K: int
    multiplicities: list[int]
    max_residual: float
    max_relative_deviation: float

    def rows(self):
        ang = root_angles(self.K)
        return [(self.K, j, float(ang[j]), m) for j, m in enumerate(self.multiplicities)]


def degeneracy_profile(K: int) -> DegeneracyProfile:
    """Multiplicity of each root of the spectral lattice, from traces of the projection polynomials."""
    tr = power_traces(K)
    ell = np.arange(4 * K)
    mults, worst = [], 0.0
    for j in range(4 * K):
        z = _projection_coefficient(K, j)
        t = np.sum(z**ell * tr) / (4 * K)
        m = int(round(t.real))
        res = max(abs(t.real - m), abs(t.imag))
        worst = max(worst, res)
        if res > 1e-6:
            raise NonIntegerTrace(f"K={K}, j={j}: trace {t} is not an integer")
        mults.append(m)
    if sum(mults) != 2**K:
        raise NonIntegerTrace(f"multiplicities sum to {sum(mults)}, not {2**K}")
    mean = 2**K / (4 * K)
    rel = max(abs(m - mean) for m in mults) / mean
    return DegeneracyProfile(K, mults, worst, rel)


def write_profile_csv(profiles, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["K", "j", "root_angle", "multiplicity"])
        for p in profiles:
            w.writerows(p.rows())


# --- staircases -----------------------------------------------------------------------


def staircase_mask(K: int, m: int, flipped: bool = False) -> np.ndarray:
    """Support of class A_m (or the row-reversed class B_m) as an n x n boolean array."""
    n = 2**K
    i = np.arange(1, n + 1)
    k = np.arange(2**m)
    cols = np.mod(np.multiply.outer(2**m * i, np.ones_like(k)) - k, n)
    cols[cols == 0] = n
    mask = np.zeros((n, n), dtype=bool)
    mask[np.repeat(i - 1, len(k)), cols.ravel() - 1] = True
    return mask[::-1] if flipped else mask


@dataclass
class StaircaseReport:
    K: int
    m: int
    modulus_error: float
    a_matches: bool
    b_matches: bool

    def to_dict(self):
        return dict(self.__dict__)


def staircase_check(K: int, m: int, U=None) -> StaircaseReport:
    """Support of 2^{m/2} U^m is class A_m and that of 2^{m/2} U^{2K+m} is class B_m."""
    _check_K(K, 12)
    if not 1 <= m <= K:
        raise ConfigurationError(f"m must lie in [1, {K}]")
    n = 2**K
    Us = sp.csr_matrix(getattr(U, "matrix", U)) if U is not None else _sparse_doubling(n)
    cur = np.eye(n)
    for _ in range(m):
        cur = Us @ cur
    A = 2 ** (m / 2) * cur
    for _ in range(2 * K):
        cur = Us @ cur
    B = 2 ** (m / 2) * cur
    mod_err = max(
        float(np.max(np.minimum(np.abs(np.abs(X)), np.abs(np.abs(X) - 1)))) for X in (A, B)
    )
    a_ok = bool(np.array_equal(np.abs(A) > 0.5, staircase_mask(K, m)))
    b_ok = bool(np.array_equal(np.abs(B) > 0.5, staircase_mask(K, m, flipped=True)))
    rep = StaircaseReport(K, m, mod_err, a_ok, b_ok)
    if mod_err > 1e-10 or not (a_ok and b_ok):
        raise PatternViolated(f"K={K}, m={m}: staircase pattern fails ({rep})")
    return rep


# --- bad coordinates and pairs for n = 2^K -------------------------------------------


@dataclass
class BadPairsReport:
    K: int
    r: int
    bad_coordinates: list[int]
    bad_pair_count: int
    bad_bound: int
    pair_bound: int
    diag_max_ratio: float
    off_max_ratio: float
    diag_envelope: float
    off_envelope: float
    passed: bool
    window_diagonal_counts: dict = field(default_factory=dict)

    def to_dict(self):
        d = dict(self.__dict__)
        d["bad_count"] = len(self.bad_coordinates)
        return d


def _windows(K, r):
    diag = sorted(set(range(1, r + 1)) | set(range(2 * K - r, 2 * K + 1)))
    off = sorted(
        set(range(1, r + 1)) | set(range(2 * K - r, 2 * K + r + 1)) | set(range(4 * K - r, 4 * K))
    )
    return diag, off


def bad_pairs_2k(K: int, r: int, check: bool = True) -> BadPairsReport:
    """Bad coordinates/pairs from short and near-half-period powers, and the projector envelopes."""
    _check_K(K, 12)
    if not 1 <= r < K:
        raise ConfigurationError(f"r must lie in [1, {K - 1}]")
    n = 2**K
    U = doubling_unitary(n)
    Us = sp.csr_matrix(U.matrix)
    diag_w, off_w = _windows(K, r)
    bad = np.zeros(n, dtype=bool)
    pairs = np.zeros((n, n), dtype=bool)
    counts = {}
    cur = np.eye(n)
    for ell in range(1, 4 * K):
        cur = Us @ cur
        support = np.abs(cur) > SUPPORT_TOL
        if ell in diag_w:
            d = np.diagonal(support)
            counts[ell] = int(d.sum())
            bad |= d
        if ell in off_w:
            pairs |= support
    np.fill_diagonal(pairs, False)
    bad_list = [int(x) + 1 for x in np.flatnonzero(bad)]
    bad_bound = 4 * (2**r - 1)
    pair_bound = 8 * (2**r - 1) * n
    pair_count = int(pairs.sum())

    scale = 1 / (4 * K)
    diag_env = scale * 10 * 2 ** (-r / 2)
    off_env = 10 * 2 ** (-r / 2) / (4 * K)
    good = ~bad
    good_pairs = ~pairs
    np.fill_diagonal(good_pairs, False)
    diag_worst = off_worst = 0.0
    for j in range(4 * K):
        Pj = eigenspace_projection_poly(U, K, j)
        d = np.abs(np.real(np.diagonal(Pj)) - scale)
        if good.any():
            diag_worst = max(diag_worst, float(d[good].max()))
        off = np.abs(Pj)[good_pairs]
        if off.size:
            off_worst = max(off_worst, float(off.max()))
    passed = (
        len(bad_list) <= bad_bound
        and pair_count <= pair_bound
        and diag_worst <= diag_env
        and off_worst <= off_env
    )
    rep = BadPairsReport(
        K, r, bad_list, pair_count, bad_bound, pair_bound,
        diag_worst / diag_env, off_worst / off_env, diag_env, off_env, passed, counts,
    )
    if check and not passed:
        raise BoundViolated(f"K={K}, r={r}: bad-pair bounds fail ({rep.to_dict()})")
    return rep


# --- Gaussian eigenbases ---------------------------------------------------------------


@dataclass
class EigenbasisGaussianResult:
    K: int
    reports: list[GaussianDistanceReport]
    ks_real_max: float
    ks_imag_max: float
    lip_max: float
    eigen_residual: float
    multiplicities: list[int]


def random_eigenbasis_gaussian(K: int, rng, spec: SpectralData | None = None) -> EigenbasisGaussianResult:
    """Haar-random orthonormal eigenbasis in each eigenspace and Gaussian statistics of every vector."""
    _check_K(K, 12)
    n = 2**K
    U = doubling_unitary(n)
    spec = spec if spec is not None else eigendecompose(U)
    j, _ = assign_roots(spec.phases, K)
    vecs = np.empty_like(spec.vectors, dtype=complex)
    theta = root_angles(K)[j]
    mults = []
    for root in range(4 * K):
        idx = np.flatnonzero(j == root)
        mults.append(int(idx.size))
        if idx.size:
            vecs[:, idx] = spec.vectors[:, idx] @ haar_random_unitary(idx.size, rng)
    Us = sp.csr_matrix(U.matrix)
    resid = float(np.max(np.linalg.norm(Us @ vecs - vecs * np.exp(1j * theta), axis=0)))
    if resid > 1e-9:
        raise EigensolverFailure(f"rotated basis is not an eigenbasis (residual {resid:.2e})")
    stats = gaussian_distance_columns(vecs)
    reports = [
        GaussianDistanceReport(float(a), float(b), float(c), n, mults[j[k]])
        for k, (a, b, c) in enumerate(zip(stats.ks_real, stats.ks_imag, stats.lip))
    ]
    return EigenbasisGaussianResult(
        K, reports, float(stats.ks_real.max()), float(stats.ks_imag.max()), float(stats.lip.max()), resid, mults
    )


# --- failing coordinate ----------------------------------------------------------------


def h_delta(t, delta):
    """Trapezoid: 1 for |t| <= pi/2 - delta, 0 for |t| >= pi/2, linear between (t taken mod 2pi)."""
    s = np.abs(np.angle(np.exp(1j * np.asarray(t, dtype=float))))
    return np.clip((np.pi / 2 - s) / delta, 0.0, 1.0)


def h_delta_fourier(delta: float, j: int) -> float:
    if not 0 < delta < np.pi / 2:
        raise ConfigurationError("delta must lie in (0, pi/2)")
    if j == 0:
        return (np.pi - delta) / TWO_PI
    return 2 / (np.pi * j**2 * delta) * np.sin(j * (np.pi - delta) / 2) * np.sin(j * delta / 2)


def h_delta_fourier_quad(delta: float, j: int) -> float:
    """Same coefficient by numerical quadrature (independent check)."""
    knots = [-np.pi / 2, -np.pi / 2 + delta, np.pi / 2 - delta, np.pi / 2]
    val, _ = integrate.quad(
        lambda t: h_delta(t, delta) * np.cos(j * t), -np.pi / 2, np.pi / 2, points=knots[1:3], epsabs=1e-14, limit=200
    )
    return val / TWO_PI


def series_constant(terms: int = 200) -> float:
    """(1/pi) sum_l (5 + 4l) / ((1 + 4l)(3 + 4l) 2^{(1+4l)/2})."""
    ell = np.arange(terms)
    return float(np.sum((5 + 4 * ell) / ((1 + 4 * ell) * (3 + 4 * ell) * 2 ** ((1 + 4 * ell) / 2))) / np.pi)


def corner_powers(n: int, jmax: int) -> np.ndarray:
    """(U^j)_{11} for j = 0..jmax."""
    if n % 2:
        raise OddDimension(f"n = {n} must be even")
    Us = _sparse_doubling(n)
    v = np.zeros(n)
    v[0] = 1
    out = [1.0]
    for _ in range(jmax):
        v = Us @ v
        out.append(float(v[0]))
    return np.array(out)


@dataclass
class FailingCoordinateResult:
    n: int
    K: int
    delta: float
    series_value: float
    series_constant: float
    limit_value: float
    tail_bound: float
    exact_value: float | None
    corner_error: float

    @property
    def consistent(self) -> bool:
        if self.exact_value is None:
            return True
        return self.series_value <= self.exact_value + self.tail_bound + 1e-9

    def to_dict(self):
        d = dict(self.__dict__)
        d["consistent"] = self.consistent
        return d


def failing_arc() -> ArcWindow:
    """The closed arc [-pi/2, pi/2]."""
    return ArcWindow(0.0, np.pi, closed=True)


def failing_coordinate_bound(n: int, spec: SpectralData | None = None, exact: bool = True) -> FailingCoordinateResult:
    """Truncated Fourier lower bound and exact value of (P^I)_{11} for I = [-pi/2, pi/2]."""
    if n < 2 or n % 2:
        raise OddDimension(f"n = {n} must be even")
    K = int(math.floor(math.log2(n)))
    delta = K ** (-0.75)
    corner = corner_powers(n, K)
    expected = 2.0 ** (-np.arange(K + 1) / 2)
    corner_err = float(np.max(np.abs(corner - expected)))
    coeffs = np.array([h_delta_fourier(delta, j) for j in range(K + 1)])
    series = float(coeffs[0] + 2 * np.sum(coeffs[1:] * corner[1:]))
    const = series_constant()
    exact_value = None
    if exact:
        spec = spec if spec is not None else eigendecompose(doubling_unitary(n))
        exact_value = pointwise_weyl(spec, failing_arc(), 1)
    return FailingCoordinateResult(
        n, K, delta, series, const, 0.5 + const, 4 / (np.pi * K * delta), exact_value, corner_err
    )
