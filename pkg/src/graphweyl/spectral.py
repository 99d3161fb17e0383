"""Eigendecomposition of unitaries, arc projections, Weyl sums and Selberg polynomials."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import (
    BoundViolated,
    ConfigurationError,
    CutoffTooLarge,
    DegreeTooSmall,
    DimensionMismatch,
    EigensolverFailure,
    IndexOutOfRange,
    NotUnitary,
)
from .interval_map import PiecewiseLinearMap, k_tilde
from .markov import bad_coordinates

TWO_PI = 2 * np.pi
BOUNDARY_TOL = 1e-12
CLUSTER_TOL = 1e-8


def _matmul(A, B):
    """A @ B keeping real A real when B is complex."""
    if np.iscomplexobj(B) and not np.iscomplexobj(A):
        # strided .real/.imag views would bypass BLAS
        A = np.ascontiguousarray(A)
        return A @ np.ascontiguousarray(B.real) + 1j * (A @ np.ascontiguousarray(B.imag))
    return A @ B


def _cluster(phases, tol):
    """Group sorted phases into runs closer than tol, joining across 0 = 2*pi."""
    n = len(phases)
    if n == 0:
        return []
    cuts = np.flatnonzero(np.diff(phases) > tol) + 1
    groups = np.split(np.arange(n), cuts)
    if len(groups) > 1 and phases[0] + TWO_PI - phases[-1] <= tol:
        groups[0] = np.concatenate([groups[-1], groups[0]])
        groups.pop()
    return groups


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Eigenphases in [0, 2pi) sorted ascending, with orthonormal eigenvector columns."""

    phases: np.ndarray
    vectors: np.ndarray
    residual: float = float("nan")
    orthogonality: float = float("nan")
    cluster_tol: float = CLUSTER_TOL
    method: str = "given"

    def __post_init__(self):
        if self.vectors.shape != (len(self.phases), len(self.phases)):
            raise DimensionMismatch("eigenvector matrix does not match number of phases")

    @property
    def n(self) -> int:
        return len(self.phases)

    @cached_property
    def clusters(self) -> list[np.ndarray]:
        return _cluster(self.phases, self.cluster_tol)

    @cached_property
    def weights(self) -> np.ndarray:
        """|psi_{x,j}|^2, rows are coordinates, columns eigenvectors."""
        return np.abs(self.vectors) ** 2

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * np.exp(1j * self.phases)) @ self.vectors.conj().T


def eigendecompose(U, cluster_tol: float = CLUSTER_TOL, unitary_tol: float = 1e-10) -> SpectralData:
    """Full spectral decomposition of a unitary matrix.

    Decoupled diagonal blocks (connected components of the support graph) are
    decomposed separately and reassembled.
    """
    M = np.asarray(getattr(U, "matrix", U))
    n = M.shape[0]
    if M.shape != (n, n):
        raise DimensionMismatch(f"expected a square matrix, got {M.shape}")
    pattern = sp.csr_matrix(M != 0)
    ncomp, labels = connected_components(pattern, directed=False)
    if ncomp == 1:
        return _eigendecompose_block(M, cluster_tol, unitary_tol)
    phases = np.empty(n)
    vecs = np.zeros((n, n), dtype=complex)
    residual = orth = 0.0
    pos = 0
    for c in range(ncomp):
        idx = np.flatnonzero(labels == c)
        part = _eigendecompose_block(M[np.ix_(idx, idx)], cluster_tol, unitary_tol)
        cols = slice(pos, pos + len(idx))
        phases[cols] = part.phases
        vecs[idx, cols] = part.vectors
        residual = max(residual, part.residual)
        orth = max(orth, part.orthogonality)
        pos += len(idx)
    order = np.argsort(phases, kind="stable")
    return SpectralData(phases[order], vecs[:, order], residual, orth, cluster_tol, f"blockwise[{ncomp}]")


def _eigendecompose_block(M, cluster_tol, unitary_tol) -> SpectralData:
    """Dense spectral decomposition of one unitary block.

    The Hermitian part (U + U*)/2 is diagonalised first.  Its eigenspaces are
    invariant under U (U is normal), so U is then reduced on each group of
    nearly equal Hermitian eigenvalues by a small complex Schur factorisation.
    For real U this keeps the expensive n^3 work in real arithmetic.  If the
    residual certificate fails the routine falls back to a full complex Schur.
    """
    n = M.shape[0]
    gram = M.conj().T @ M
    unit_err = float(np.max(np.abs(gram - np.eye(n))))
    del gram
    if unit_err > unitary_tol:
        raise NotUnitary(f"max |U*U - I| = {unit_err:.3e}")

    H = (M + M.conj().T) / 2
    w, v = np.linalg.eigh(H)
    del H
    W = M @ v
    vtv = v.conj().T @ v
    base_orth = float(np.max(np.abs(vtv - np.eye(n))))
    del vtv

    phases = np.empty(n)
    vecs = np.empty((n, n), dtype=complex)
    residual = 0.0
    z_orth = 0.0
    cuts = np.flatnonzero(np.diff(w) > 1e-6) + 1
    for g in np.split(np.arange(n), cuts):
        B = v[:, g]
        C = B.conj().T @ W[:, g]
        T, Z = sla.schur(C.astype(complex), output="complex")
        lam = np.diag(T)
        vg = _matmul(B, Z)
        wg = _matmul(W[:, g], Z)
        residual = max(residual, float(np.max(np.linalg.norm(wg - vg * lam, axis=0))))
        z_orth = max(z_orth, float(np.max(np.abs(Z.conj().T @ Z - np.eye(len(g))))))
        phases[g] = np.mod(np.angle(lam), TWO_PI)
        vecs[:, g] = vg
    orth = base_orth + z_orth
    method = "hermitian-part"
    if residual > 1e-10 or orth > 1e-10:
        T, Z = sla.schur(M.astype(complex), output="complex")
        lam = np.diag(T)
        residual = float(np.max(np.linalg.norm(M @ Z - Z * lam, axis=0)))
        orth = float(np.max(np.abs(Z.conj().T @ Z - np.eye(n))))
        phases, vecs, method = np.mod(np.angle(lam), TWO_PI), Z, "schur"
        if residual > 1e-10 or orth > 1e-10:
            raise EigensolverFailure(f"residual {residual:.2e}, orthogonality {orth:.2e}")

    phases[phases > TWO_PI - BOUNDARY_TOL] = 0.0
    order = np.argsort(phases, kind="stable")
    return SpectralData(phases[order], vecs[:, order], residual, orth, cluster_tol, method)


@dataclass(frozen=True)
class ArcWindow:
    """Arc of R/2piZ centred at ``center`` with length ``width``.

    Membership is half-open [c - w/2, c + w/2) unless ``closed`` is set.
    Phases within 1e-12 of an endpoint are assigned by that rule.
    """

    center: float
    width: float
    closed: bool = False

    def __post_init__(self):
        if not 0 < self.width <= TWO_PI + 1e-15:
            raise ConfigurationError(f"arc width must lie in (0, 2pi], got {self.width}")

    @classmethod
    def from_endpoints(cls, start, end, closed=False):
        width = (end - start) % TWO_PI or TWO_PI
        return cls(start + width / 2, width, closed)

    @property
    def start(self) -> float:
        return self.center - self.width / 2

    @property
    def end(self) -> float:
        return self.center + self.width / 2

    def _offset(self, theta):
        d = np.mod(np.asarray(theta, dtype=float) - self.start, TWO_PI)
        return np.where(d > TWO_PI - BOUNDARY_TOL, 0.0, d)

    def contains(self, theta) -> np.ndarray:
        if self.width >= TWO_PI:
            return np.ones(np.shape(theta), dtype=bool)
        d = self._offset(theta)
        if self.closed:
            return d <= self.width + BOUNDARY_TOL
        return d < self.width - BOUNDARY_TOL

    def near_boundary(self, theta) -> np.ndarray:
        if self.width >= TWO_PI:
            return np.zeros(np.shape(theta), dtype=bool)
        d = self._offset(theta)
        return (d <= BOUNDARY_TOL) | (np.abs(d - self.width) <= BOUNDARY_TOL)

    def indicator(self, t) -> np.ndarray:
        return self.contains(t).astype(float)


def arc_projection(spec: SpectralData, arc: ArcWindow) -> np.ndarray:
    sel = spec.vectors[:, arc.contains(spec.phases)]
    return sel @ sel.conj().T


def weyl_count(spec: SpectralData, arc: ArcWindow) -> int:
    return int(np.count_nonzero(arc.contains(spec.phases)))


def pointwise_weyl_all(spec: SpectralData, arc: ArcWindow) -> np.ndarray:
    """(P^I)_{xx} for every coordinate."""
    return spec.weights @ arc.contains(spec.phases).astype(float)


def pointwise_weyl(spec: SpectralData, arc: ArcWindow, x: int) -> float:
    if not 1 <= x <= spec.n:
        raise IndexOutOfRange(f"coordinate {x} outside [1, {spec.n}]")
    mask = arc.contains(spec.phases)
    return float(spec.weights[x - 1, mask].sum())


def effective_horizon(smap: PiecewiseLinearMap, n: int) -> int:
    """K̃(n), or floor(log2 n) for the doubling map at even n."""
    if smap.is_doubling and n % 2 == 0:
        return int(math.floor(math.log2(n)))
    return k_tilde(smap, n)


def weyl_envelope(width: float, K: int, r: int) -> float:
    a = TWO_PI / (width * K)
    return width / TWO_PI * (a + (1 + a) * 6 * 2.0 ** (-r / 2))


@dataclass
class WeylRemainderReport:
    n: int
    center: float
    width: float
    r: int
    K: int
    envelope: float
    max_deviation: float
    max_ratio: float
    bad_count: int
    bad_bound: int
    violators: list = field(default_factory=list)
    boundary_phases: int = 0
    count: int = 0
    vacuous: bool = False

    @property
    def passed(self) -> bool:
        return not self.violators

    def to_dict(self):
        return dict(self.__dict__, passed=self.passed)


def weyl_remainder_report(
    spec: SpectralData, smap: PiecewiseLinearMap, n: int, arc: ArcWindow, r: int, bad=None, strict: bool = True
) -> WeylRemainderReport:
    """Compare (P^I)_{xx} with |I|/2pi on all good coordinates.

    ``bad`` may be a precomputed :class:`BadCoordinateSet`.  With ``strict``
    a violation raises :class:`BoundViolated`.
    """
    if spec.n != n:
        raise DimensionMismatch(f"spectral data has n = {spec.n}, not {n}")
    K = effective_horizon(smap, n)
    if r >= K:
        raise CutoffTooLarge(f"r = {r} must be below K = {K}")
    if bad is None:
        bad = bad_coordinates(smap, n, r)
    env = weyl_envelope(arc.width, K, r)
    diag = pointwise_weyl_all(spec, arc)
    target = arc.width / TWO_PI
    good = bad.good
    dev = np.abs(diag[good - 1] - target)
    violators = [int(x) for x in good[dev > env]]
    max_dev = float(dev.max()) if dev.size else 0.0
    rep = WeylRemainderReport(
        n=n,
        center=float(arc.center),
        width=float(arc.width),
        r=r,
        K=K,
        envelope=env,
        max_deviation=max_dev,
        max_ratio=max_dev / env if env > 0 else 0.0,
        bad_count=len(bad),
        bad_bound=bad.bound,
        violators=violators,
        boundary_phases=int(np.count_nonzero(arc.near_boundary(spec.phases))),
        count=weyl_count(spec, arc),
        vacuous=env >= max(target, 1 - target),
    )
    if strict and violators:
        raise BoundViolated(f"{len(violators)} good coordinates exceed the envelope {env:.4g}")
    return rep


# --- trigonometric polynomials -------------------------------------------------


@dataclass(frozen=True, eq=False)
class TrigPoly:
    """Coefficients c_k, k = -degree..degree, of sum_k c_k e^{ikt}."""

    coeffs: np.ndarray

    @property
    def degree(self) -> int:
        return (len(self.coeffs) - 1) // 2

    def coefficient(self, k: int) -> complex:
        d = self.degree
        return complex(self.coeffs[k + d]) if abs(k) <= d else 0j

    def __call__(self, t):
        return evaluate_trig_poly(self.coeffs, t)


def evaluate_trig_poly(coeffs, t):
    """sum_k c_k exp(i k t); real output for conjugate-symmetric coefficients."""
    c = np.asarray(coeffs, dtype=complex)
    if c.ndim != 1 or len(c) % 2 == 0:
        raise ConfigurationError("coefficients must be indexed -d..d (odd length)")
    d = (len(c) - 1) // 2
    t = np.asarray(t, dtype=float)
    k = np.arange(-d, d + 1)
    vals = np.exp(1j * np.multiply.outer(t, k)) @ c
    if np.allclose(c, c[::-1].conj(), atol=1e-14, rtol=0):
        return vals.real
    return vals


def _vaaler_weight(t):
    """J-hat(t) = pi t (1 - |t|) cot(pi t) + |t| on |t| < 1, zero outside, J-hat(0) = 1."""
    t = np.abs(np.asarray(t, dtype=float))
    out = np.zeros_like(t)
    inside = t < 1
    nz = inside & (t > 0)
    tt = t[nz]
    out[nz] = np.pi * tt * (1 - tt) / np.tan(np.pi * tt) + tt
    out[t == 0] = 1.0
    return out


@dataclass(frozen=True, eq=False)
class SelbergPolyPair:
    arc: ArcWindow
    delta: float
    minorant: TrigPoly
    majorant: TrigPoly

    @property
    def degree(self) -> int:
        return self.minorant.degree

    @property
    def coefficient_bound(self) -> float:
        return (self.arc.width + TWO_PI / self.delta) / TWO_PI


def selberg_polynomials(arc: ArcWindow, delta: float) -> SelbergPolyPair:
    """Trigonometric minorant/majorant of the arc indicator with spectrum in [-delta, delta].

    Periodised Beurling-Selberg functions: the indicator's Fourier coefficients
    damped by Vaaler's weight, plus or minus Fejér bumps at both endpoints.
    """
    if delta < 1:
        raise DegreeTooSmall(f"delta = {delta} < 1 leaves only the constant term")
    D = int(math.floor(delta))
    k = np.arange(-D, D + 1)
    a, b = arc.start, arc.end
    chi = np.empty(len(k), dtype=complex)
    nz = k != 0
    kk = k[nz]
    chi[nz] = (np.exp(-1j * kk * a) - np.exp(-1j * kk * b)) / (TWO_PI * 1j * kk)
    chi[~nz] = arc.width / TWO_PI
    damped = _vaaler_weight(k / delta) * chi
    fejer = np.clip(1 - np.abs(k) / delta, 0, None) / (2 * delta) * (np.exp(-1j * k * a) + np.exp(-1j * k * b))
    return SelbergPolyPair(arc, float(delta), TrigPoly(damped - fejer), TrigPoly(damped + fejer))


def trig_poly_mass(poly: TrigPoly) -> float:
    """Integral over one period, by the trapezoid rule (exact for enough nodes)."""
    m = 4 * poly.degree + 8
    t = np.arange(m) * TWO_PI / m
    return float(np.real(poly(t)).sum() * TWO_PI / m)


def operator_poly_diagonal(U, poly: TrigPoly) -> np.ndarray:
    """Diagonal of sum_k c_k U^k, computed from explicit matrix powers."""
    M = np.asarray(getattr(U, "matrix", U))
    n = M.shape[0]
    out = np.full(n, poly.coefficient(0), dtype=complex)
    Mk = np.eye(n, dtype=M.dtype)
    for k in range(1, poly.degree + 1):
        Mk = Mk @ M
        d = np.diagonal(Mk)
        out += poly.coefficient(k) * d + poly.coefficient(-k) * d.conj()
    return out.real if np.max(np.abs(out.imag)) <= 1e-10 else out
