"""Quantized observables, Egorov defects and quantum variance."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy import integrate
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import LinearOperator, eigsh, svds

from .errors import (
    BadDimension,
    BoundViolated,
    ConfigurationError,
    DimensionMismatch,
    EmptyBin,
    PowerBeyondEhrenfest,
    QuadratureFailure,
)
from .interval_map import PiecewiseLinearMap, k_tilde
from .spectral import ArcWindow, SpectralData

QUAD_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Function:
    """A test function h on [0, 1] with the data needed to quantize it.

    ``antiderivative`` enables exact cell averages; without it averages come
    from adaptive quadrature.  ``lip`` is a global Lipschitz bound.
    """

    name: str
    f: Callable
    lip: float
    sup: float
    antiderivative: Callable | None = None
    integral: float | None = None

    def __call__(self, x):
        return self.f(np.asarray(x, dtype=float))

    def mean(self) -> float:
        if self.integral is not None:
            return self.integral
        if self.antiderivative is not None:
            return float(self.antiderivative(1.0) - self.antiderivative(0.0))
        return _quad(self.f, 0.0, 1.0)

    def average_over(self, lo, hi) -> np.ndarray:
        """(1/(hi-lo)) * integral of h over [lo, hi], elementwise."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if self.antiderivative is not None:
            F = self.antiderivative
            return (F(hi) - F(lo)) / (hi - lo)
        return np.array([_quad(self.f, a, b) / (b - a) for a, b in zip(lo.ravel(), hi.ravel())]).reshape(lo.shape)

    def cell_averages(self, n: int) -> np.ndarray:
        x = np.arange(n)
        return self.average_over(x / n, (x + 1) / n)

    def __mul__(self, other: "Function") -> "Function":
        return Function(
            f"({self.name})*({other.name})",
            lambda x, a=self.f, b=other.f: a(x) * b(x),
            lip=self.lip * other.sup + other.lip * self.sup,
            sup=self.sup * other.sup,
        )


def _quad(f, a, b):
    val, err = integrate.quad(lambda t: float(f(np.array(t))), a, b, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
    if not np.isfinite(val) or err > 1e-9 * max(1.0, abs(b - a)):
        raise QuadratureFailure(f"quadrature on [{a}, {b}] did not converge (error estimate {err:.2e})")
    return val


def constant(c: float) -> Function:
    return Function(str(c), lambda x: np.full_like(x, c, dtype=float), 0.0, abs(c), lambda x: c * x, c)


def monomial(p: int) -> Function:
    if p == 0:
        return constant(1.0)
    name = "x" if p == 1 else f"x^{p}"
    return Function(name, lambda x: x**p, float(p), 1.0, lambda x: x ** (p + 1) / (p + 1), 1 / (p + 1))


def cosine(omega: float, name: str | None = None) -> Function:
    """h(x) = cos(omega x)."""
    name = name or f"cos({omega:g}x)"
    return Function(name, lambda x: np.cos(omega * x), abs(omega), 1.0, lambda x: np.sin(omega * x) / omega)


def sine(omega: float, name: str | None = None) -> Function:
    name = name or f"sin({omega:g}x)"
    return Function(name, lambda x: np.sin(omega * x), abs(omega), 1.0, lambda x: -np.cos(omega * x) / omega)


def piecewise_linear(xs, ys) -> Function:
    """Linear interpolation of the table (xs, ys) on [0, 1]."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape or xs[0] > 0 or xs[-1] < 1 or np.any(np.diff(xs) <= 0):
        raise ConfigurationError("piecewise-linear table needs increasing nodes covering [0, 1]")
    slopes = np.diff(ys) / np.diff(xs)
    cum = np.concatenate([[0.0], np.cumsum(np.diff(xs) * (ys[:-1] + ys[1:]) / 2)])

    def F(x):
        x = np.asarray(x, dtype=float)
        k = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, len(xs) - 2)
        dx = x - xs[k]
        return cum[k] + ys[k] * dx + slopes[k] * dx**2 / 2

    return Function(
        "pwl" + json.dumps([list(map(float, xs)), list(map(float, ys))]),
        lambda x: np.interp(x, xs, ys),
        float(np.max(np.abs(slopes))),
        float(np.max(np.abs(ys))),
        F,
    )


_PATTERNS = [
    (re.compile(r"^(cos|sin)\(2\s*\*?\s*pi\s*\*?\s*(\d*)\s*\*?\s*x\)$"), "trig2"),
    (re.compile(r"^(cos|sin)\(\s*pi\s*\*?\s*(\d*)\s*\*?\s*x\)$"), "trig1"),
    (re.compile(r"^x\s*(?:\^|\*\*)\s*(\d+)$"), "power"),
]


def parse_function(desc) -> Function:
    """Resolve a function descriptor.

    Accepted forms: numbers, ``"x"``, ``"x^p"``, ``"cos(2pi k x)"``,
    ``"sin(2*pi*x)"``, ``"cos(pi x)"`` and ``{"pwl": [[x...], [y...]]}``.
    """
    if isinstance(desc, Function):
        return desc
    if isinstance(desc, (int, float)):
        return constant(float(desc))
    if isinstance(desc, dict) and "pwl" in desc:
        xs, ys = desc["pwl"]
        return piecewise_linear(xs, ys)
    if not isinstance(desc, str):
        raise ConfigurationError(f"cannot interpret observable {desc!r}")
    s = desc.strip().replace(" ", "")
    if s == "x":
        return monomial(1)
    try:
        return constant(float(s))
    except ValueError:
        pass
    for pat, kind in _PATTERNS:
        m = pat.match(s)
        if not m:
            continue
        if kind == "power":
            return monomial(int(m.group(1)))
        k = int(m.group(2) or 1)
        omega = (2 if kind == "trig2" else 1) * np.pi * k
        return (cosine if m.group(1) == "cos" else sine)(omega, name=desc)
    raise ConfigurationError(f"unknown observable {desc!r}")


def composed(h: Function, smap: PiecewiseLinearMap, t: int) -> "ComposedFunction":
    return ComposedFunction(h, smap, t)


@dataclass(frozen=True, eq=False)
class ComposedFunction(Function):
    """h o S^t.  Cell averages use the exact affine image of each cell when possible."""

    def __init__(self, h: Function, smap: PiecewiseLinearMap, t: int):
        s = smap.constants.s_max
        object.__setattr__(self, "name", f"({h.name})oS^{t}")
        object.__setattr__(self, "f", lambda x: h.f(smap.iterate_float(x, t)))
        object.__setattr__(self, "lip", h.lip * s**t)
        object.__setattr__(self, "sup", h.sup)
        object.__setattr__(self, "antiderivative", None)
        object.__setattr__(self, "integral", h.mean())
        object.__setattr__(self, "base", h)
        object.__setattr__(self, "smap", smap)
        object.__setattr__(self, "t", t)

    def cell_averages(self, n: int) -> np.ndarray:
        if self.t == 0:
            return self.base.cell_averages(n)
        if n % self.smap.m0 == 0 and self.t <= k_tilde(self.smap, n) + 1:
            imgs = [self.smap.cell_image(n, x, self.t) for x in range(1, n + 1)]
            lo = np.array([float(a) for _, a, _ in imgs])
            hi = np.array([float(b) for _, _, b in imgs])
            return self.base.average_over(lo, hi)
        return super().cell_averages(n)


def birkhoff_average(smap: PiecewiseLinearMap, h: Function, T: int) -> "BirkhoffAverage":
    if T < 1:
        raise ConfigurationError("T must be at least 1")
    return BirkhoffAverage(smap, h, T)


@dataclass(frozen=True, eq=False)
class BirkhoffAverage(Function):
    """[h]_T = (1/T) sum_{t<T} h o S^t."""

    def __init__(self, smap: PiecewiseLinearMap, h: Function, T: int):
        terms = [composed(h, smap, t) for t in range(T)]
        object.__setattr__(self, "name", f"[{h.name}]_{T}")
        object.__setattr__(self, "f", lambda x: sum(g.f(x) for g in terms) / T)
        object.__setattr__(self, "lip", sum(g.lip for g in terms) / T)
        object.__setattr__(self, "sup", h.sup)
        object.__setattr__(self, "antiderivative", None)
        object.__setattr__(self, "integral", h.mean())
        object.__setattr__(self, "terms", terms)

    def cell_averages(self, n: int) -> np.ndarray:
        return sum(g.cell_averages(n) for g in self.terms) / len(self.terms)


@dataclass(frozen=True, eq=False)
class Observable:
    """Diagonal matrix O_n(h) of cell averages."""

    n: int
    diagonal: np.ndarray
    source: str
    lip_constant: float
    sup_norm: float
    integral: float

    def trace_error(self) -> float:
        return abs(float(np.mean(self.diagonal)) - self.integral)

    def as_sparse(self):
        return sp.diags(self.diagonal, format="csr")


def observable(h, n: int) -> Observable:
    h = parse_function(h)
    d = np.asarray(h.cell_averages(n), dtype=float)
    return Observable(n, d, h.name, h.lip, h.sup, h.mean())


# --- operator norms ----------------------------------------------------------


def operator_norm(D, tol: float = 1e-10) -> float:
    """Spectral norm of a sparse or dense matrix.

    Sparse matrices are split into connected blocks, each normed exactly.
    Large dense or connected blocks use Lanczos (Hermitian) or a truncated SVD.
    """
    if sp.issparse(D):
        D = D.tocsr()
        D.eliminate_zeros()
        if D.nnz == 0:
            return 0.0
        pattern = (abs(D) + abs(D).T).tocsr()
        ncomp, labels = connected_components(pattern, directed=False)
        order = np.argsort(labels, kind="stable")
        bounds = np.searchsorted(labels[order], np.arange(ncomp + 1))
        best = 0.0
        for c in range(ncomp):
            idx = order[bounds[c] : bounds[c + 1]]
            if len(idx) <= 512:
                block = D[idx][:, idx].toarray()
                if np.any(block):
                    best = max(best, float(np.linalg.norm(block, 2)))
            else:
                best = max(best, _iterative_norm(D[idx][:, idx], tol))
        return best
    D = np.asarray(D)
    if D.shape[0] <= 1024:
        return float(np.linalg.norm(D, 2))
    return _iterative_norm(D, tol)


def _iterative_norm(D, tol):
    n = D.shape[0]
    herm = sp.issparse(D) and abs(D - D.conj().T).max() <= 1e-14 or (
        not sp.issparse(D) and np.allclose(D, D.conj().T, atol=1e-14, rtol=0)
    )
    v0 = np.ones(n) / math.sqrt(n)
    if herm:
        vals = eigsh(D, k=1, which="LM", tol=tol, maxiter=10_000, v0=v0, return_eigenvectors=False)
        return float(abs(vals[0]))
    return float(svds(D, k=1, tol=tol, maxiter=10_000, v0=v0, return_singular_vectors=False)[0])


def conjugation_defect_norm(V, diag_in, diag_out, tol=1e-10) -> float:
    """||V diag(diag_in) V* - diag(diag_out)|| without forming the dense product."""
    V = np.asarray(getattr(V, "matrix", V))
    n = V.shape[0]
    a = np.asarray(diag_in)
    b = np.asarray(diag_out)
    Vh = V.conj().T

    def mv(x):
        x = np.asarray(x).reshape(n, -1)
        return V @ (a[:, None] * (Vh @ x)) - b[:, None] * x

    op = LinearOperator((n, n), matvec=mv, matmat=mv, rmatvec=mv, dtype=complex)
    herm = np.isrealobj(a) and np.isrealobj(b)
    v0 = np.ones(n) / math.sqrt(n)
    if herm:
        vals = eigsh(op, k=1, which="LM", tol=tol, maxiter=10_000, v0=v0, return_eigenvectors=False)
        return float(abs(vals[0]))
    return float(svds(op, k=1, tol=tol, maxiter=10_000, v0=v0, return_singular_vectors=False)[0])


# --- Egorov ------------------------------------------------------------------


def _sparse_unitary(U):
    M = np.asarray(getattr(U, "matrix", U))
    return sp.csr_matrix(M)


def egorov_bound(smap: PiecewiseLinearMap, h: Function, n: int, t: int = 1) -> float:
    c = smap.constants
    lead = 0.5 * c.l0**2 * c.m0 * h.lip / n
    return sum(lead * c.l0 ** (r - 1) for r in range(1, t + 1))


@dataclass(frozen=True)
class EgorovResult:
    n: int
    t: int
    defect: float
    bound: float

    @property
    def ratio(self) -> float:
        return self.defect / self.bound if self.bound else 0.0

    def __float__(self):
        return self.defect


def egorov_iterated(U, smap: PiecewiseLinearMap, h, n: int, t: int, check: bool = True) -> EgorovResult:
    """||U^t O_n(h) U^-t - O_n(h o S^t)|| with the geometric-sum bound."""
    h = parse_function(h)
    c = smap.constants
    if n % (c.m0 * c.l0):
        raise BadDimension(f"n = {n} must be a multiple of m0*l0 = {c.m0 * c.l0}")
    Um = np.asarray(getattr(U, "matrix", U))
    if Um.shape != (n, n):
        raise DimensionMismatch(f"U has shape {Um.shape}, expected ({n}, {n})")
    horizon = k_tilde(smap, n) + 1
    if t > horizon:
        raise PowerBeyondEhrenfest(f"t = {t} exceeds K̃(n)+1 = {horizon}")
    if t == 0:
        return EgorovResult(n, 0, 0.0, 0.0)
    before = h.cell_averages(n)
    after = composed(h, smap, t).cell_averages(n)
    Us = _sparse_unitary(Um)
    if Us.nnz <= 64 * n:
        Ut = Us
        for _ in range(t - 1):
            Ut = Ut @ Us
        D = Ut @ sp.diags(before) @ Ut.conj().T - sp.diags(after)
        defect = operator_norm(D)
    else:
        Ut = np.linalg.matrix_power(Um, t)
        defect = conjugation_defect_norm(Ut, before, after)
    bound = egorov_bound(smap, h, n, t)
    if check and defect > bound * (1 + 1e-12) + 1e-12:
        raise BoundViolated(f"Egorov defect {defect:.4g} exceeds bound {bound:.4g} (n={n}, t={t})")
    return EgorovResult(n, t, defect, bound)


def egorov_defect(U, smap: PiecewiseLinearMap, h, n: int, check: bool = True) -> EgorovResult:
    return egorov_iterated(U, smap, h, n, 1, check=check)


# --- quantum variance ----------------------------------------------------------


def matrix_elements(spec: SpectralData, obs: Observable) -> np.ndarray:
    """<psi_j, O psi_j> for every eigenvector."""
    if obs.n != spec.n:
        raise DimensionMismatch(f"observable has n = {obs.n}, spectrum has n = {spec.n}")
    return spec.weights.T @ obs.diagonal


def quantum_variance_bin(spec: SpectralData, obs: Observable, arc: ArcWindow) -> float:
    mask = arc.contains(spec.phases)
    if not mask.any():
        raise EmptyBin(f"no eigenphases in arc centred at {arc.center:.4g} of width {arc.width:.4g}")
    dev = matrix_elements(spec, obs)[mask] - obs.integral
    return float(np.mean(np.abs(dev) ** 2))


@dataclass
class VarianceRow:
    n: int
    bin_center: float
    bin_width: float
    variance: float
    bin_count: int


def variance_sweep(spectra: dict, h, arcs) -> list[VarianceRow]:
    """Quantum variance for every (n, arc) pair; ``spectra`` maps n to SpectralData."""
    rows = []
    for n, spec in spectra.items():
        obs = observable(h, n)
        for arc in arcs:
            count = int(np.count_nonzero(arc.contains(spec.phases)))
            var = quantum_variance_bin(spec, obs, arc) if count else float("nan")
            rows.append(VarianceRow(n, float(arc.center), float(arc.width), var, count))
    return rows
