"""Haar sampling in spectral bins, Gaussian statistics of eigenvectors, and randomized quantizations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, stats
from scipy.special import ndtr

from .errors import ConfigurationError, EmptyBin, InvariantViolation, SplitWindowTooLarge
from .quantize import ComplexUnitary, verify_unistochastic
from .spectral import TWO_PI, ArcWindow, SpectralData, _cluster

GAUSS_SCALE = math.sqrt(0.5)
DICTIONARY_CENTERS = tuple(complex(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1))


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based Philox generator keyed by (seed, *stream)."""
    if seed is None:
        raise ConfigurationError("an explicit seed is required")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


def complex_gaussian(rng, size) -> np.ndarray:
    """Standard complex Gaussian samples, E|z|^2 = 1."""
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) * GAUSS_SCALE


def haar_random_unitary(d: int, rng) -> np.ndarray:
    """Haar-distributed d x d unitary: QR of a complex Ginibre matrix with R's diagonal phases removed."""
    if d < 1:
        raise ConfigurationError("dimension must be at least 1")
    z = complex_gaussian(rng, (d, d))
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r)
    return q * (diag / np.abs(diag))


def bin_basis(spec: SpectralData, arc: ArcWindow) -> np.ndarray:
    mask = arc.contains(spec.phases)
    if not mask.any():
        raise EmptyBin(f"no eigenphases in arc centred at {arc.center:.4g}")
    return spec.vectors[:, mask]


def random_bin_vector(spec: SpectralData, arc: ArcWindow, rng) -> np.ndarray:
    """Uniform random unit vector in the span of the eigenvectors with phase in ``arc``."""
    B = bin_basis(spec, arc)
    g = complex_gaussian(rng, B.shape[1])
    return B @ (g / np.linalg.norm(g))


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    values: np.ndarray
    n: int


def coordinate_measure(v) -> EmpiricalMeasure:
    v = np.asarray(v)
    if abs(np.linalg.norm(v) - 1) > 1e-10:
        raise ConfigurationError("coordinate measure needs a unit vector")
    return EmpiricalMeasure(np.sqrt(len(v)) * v, len(v))


@dataclass(frozen=True)
class GaussianDistanceReport:
    ks_real: float
    ks_imag: float
    lip_max: float
    n: int
    dimension: int | None = None

    def to_dict(self):
        return dict(self.__dict__)


def ks_normal(samples, scale: float = GAUSS_SCALE, axis: int = 0) -> np.ndarray:
    """Kolmogorov-Smirnov distance to N(0, scale^2), vectorised along ``axis``."""
    x = np.sort(np.asarray(samples, dtype=float), axis=axis)
    x = np.moveaxis(x, axis, 0)
    m = x.shape[0]
    cdf = ndtr(x / scale)
    i = np.arange(1, m + 1).reshape((m,) + (1,) * (x.ndim - 1))
    return np.maximum((i / m - cdf).max(axis=0), (cdf - (i - 1) / m).max(axis=0))


@lru_cache(maxsize=None)
def _expected_truncated_distance(radius: float) -> float:
    """E min(1, |Z - c|) for |c| = radius and Z standard complex Gaussian (Rice-distributed modulus)."""
    b = radius / GAUSS_SCALE
    val, err = integrate.quad(lambda t: stats.rice.sf(t, b, scale=GAUSS_SCALE), 0.0, 1.0, epsabs=1e-13)
    return val


def lipschitz_deviation(values, axis: int = 0) -> np.ndarray:
    """max_c |mean f_c(values) - E f_c(Z)| over the 3x3 dictionary f_c(z) = min(1, |z - c|)."""
    z = np.asarray(values)
    best = None
    for c in DICTIONARY_CENTERS:
        emp = np.minimum(1.0, np.abs(z - c)).mean(axis=axis)
        dev = np.abs(emp - _expected_truncated_distance(abs(c)))
        best = dev if best is None else np.maximum(best, dev)
    return best


def gaussian_distance(m: EmpiricalMeasure | np.ndarray, dimension: int | None = None) -> GaussianDistanceReport:
    values = m.values if isinstance(m, EmpiricalMeasure) else np.asarray(m)
    if values.size == 0:
        raise ConfigurationError("empty measure")
    return GaussianDistanceReport(
        float(ks_normal(values.real)),
        float(ks_normal(values.imag)),
        float(lipschitz_deviation(values)),
        len(values),
        dimension,
    )


@dataclass(frozen=True)
class BatchGaussianStats:
    ks_real: np.ndarray
    ks_imag: np.ndarray
    lip: np.ndarray

    def summary(self) -> dict:
        return {
            "ks_real_max": float(self.ks_real.max()),
            "ks_real_median": float(np.median(self.ks_real)),
            "ks_imag_max": float(self.ks_imag.max()),
            "ks_imag_median": float(np.median(self.ks_imag)),
            "lip_max": float(self.lip.max()),
            "count": int(self.ks_real.size),
        }


def gaussian_distance_columns(vectors, chunk: int = 512) -> BatchGaussianStats:
    """Gaussian statistics of sqrt(n)-scaled coordinates for every column."""
    V = np.asarray(vectors)
    n, m = V.shape
    ksr, ksi, lip = np.empty(m), np.empty(m), np.empty(m)
    for s in range(0, m, chunk):
        block = np.sqrt(n) * V[:, s : s + chunk]
        ksr[s : s + chunk] = ks_normal(block.real)
        ksi[s : s + chunk] = ks_normal(block.imag)
        lip[s : s + chunk] = lipschitz_deviation(block)
    return BatchGaussianStats(ksr, ksi, lip)


# --- randomized quantization -----------------------------------------------------


def default_kappa(smap, n: int) -> int:
    from .spectral import effective_horizon

    return max(1, int(math.isqrt(effective_horizon(smap, n))))


def _bin_of(theta, kappa):
    x = np.mod(theta, TWO_PI) * kappa / TWO_PI
    near = np.abs(x - np.round(x)) < 1e-9
    x = np.where(near, np.round(x), x)
    return np.mod(np.floor(x).astype(int), kappa)


def _circular_mean(theta):
    return float(np.mod(np.angle(np.mean(np.exp(1j * theta))), TWO_PI))


@dataclass(frozen=True, eq=False)
class RandomQuantization:
    V: ComplexUnitary
    spectral: SpectralData
    kappa: int
    seed: int | None
    epsilon_split: float
    bins: np.ndarray
    original_phases: np.ndarray
    norm_diff: float
    split_clusters: int
    shifted_windows: int
    rotations: list = field(repr=False, default_factory=list)

    @property
    def constant(self) -> float:
        """C with ||V - U|| = C * 2pi/kappa."""
        return self.norm_diff * self.kappa / TWO_PI


def build_random_quantization(
    spec: SpectralData,
    kappa: int,
    epsilon_split: float | None = None,
    rng=None,
    seed: int | None = None,
    form_matrix: bool = True,
) -> RandomQuantization:
    """Haar-rotate eigenvectors inside kappa equal phase bins and split degenerate phases.

    Each eigenphase cluster is assigned to one bin by its mean.  A cluster of
    multiplicity m > 1 is replaced by m equally spaced phases across a window
    of width ``epsilon_split`` centred on it, moved inward if it would cross
    the bin edge.
    """
    if kappa < 1:
        raise ConfigurationError("kappa must be at least 1")
    if rng is None:
        rng = make_rng(seed)
    width = TWO_PI / kappa
    n = spec.n
    clusters = spec.clusters
    means = np.array([_circular_mean(spec.phases[c]) for c in clusters])
    order = np.argsort(means)
    gaps = np.diff(np.concatenate([means[order], [means[order][0] + TWO_PI]]))
    min_gap = float(gaps.min()) if len(clusters) > 1 else TWO_PI
    if epsilon_split is None:
        epsilon_split = 0.1 * min(width, min_gap)
    if epsilon_split >= width:
        raise SplitWindowTooLarge(f"epsilon_split = {epsilon_split:.4g} is not below the bin width {width:.4g}")

    cluster_bin = _bin_of(means, kappa)
    bins = np.empty(n, dtype=int)
    new_phases = spec.phases.copy()
    split = shifted = 0
    for c, b, mu in zip(clusters, cluster_bin, means):
        bins[c] = b
        m = len(c)
        if m == 1:
            continue
        split += 1
        lo_edge = b * width
        # position of the cluster measured from its bin's left edge
        rel = np.mod(mu - lo_edge + 1e-9, TWO_PI) - 1e-9
        offsets = epsilon_split * (np.arange(m) / (m - 1) - 0.5)
        margin = epsilon_split / (2 * m)
        lo, hi = rel + offsets[0], rel + offsets[-1]
        shift = 0.0
        if lo < margin:
            shift = margin - lo
        elif hi > width - margin:
            shift = (width - margin) - hi
        if shift:
            shifted += 1
        new_phases[c] = np.mod(lo_edge + rel + offsets + shift, TWO_PI)

    if np.any(_bin_of(new_phases, kappa) != bins):
        raise InvariantViolation("a reassigned phase left its bin")
    srt = np.sort(new_phases)
    phase_gap = np.min(np.diff(np.concatenate([srt, [srt[0] + TWO_PI]]))) if n > 1 else TWO_PI
    if phase_gap <= 1e-12:
        raise InvariantViolation(f"split spectrum is not simple (gap {phase_gap:.2e})")

    vecs = np.empty_like(spec.vectors, dtype=complex)
    norm_diff = 0.0
    rotations = []
    for b in range(kappa):
        idx = np.flatnonzero(bins == b)
        if idx.size == 0:
            rotations.append(None)
            continue
        W = haar_random_unitary(idx.size, rng)
        rotations.append(W)
        vecs[:, idx] = spec.vectors[:, idx] @ W
        # V and U both preserve span(spec.vectors[:, idx]); compare them there
        block = (W * np.exp(1j * new_phases[idx])) @ W.conj().T - np.diag(np.exp(1j * spec.phases[idx]))
        norm_diff = max(norm_diff, float(np.linalg.norm(block, 2)))

    order = np.argsort(new_phases, kind="stable")
    vspec = SpectralData(new_phases[order], vecs[:, order], method="random_bin_rotation")
    if form_matrix:
        Vm = (vecs * np.exp(1j * new_phases)) @ vecs.conj().T
    else:
        Vm = np.zeros((0, 0))
    V = ComplexUnitary(Vm, "random_bin_rotation") if form_matrix else None
    return RandomQuantization(
        V=V,
        spectral=vspec,
        kappa=kappa,
        seed=seed,
        epsilon_split=float(epsilon_split),
        bins=bins[order],
        original_phases=spec.phases[order],
        norm_diff=norm_diff,
        split_clusters=split,
        shifted_windows=shifted,
        rotations=rotations,
    )


def min_phase_gap(phases) -> float:
    srt = np.sort(np.mod(phases, TWO_PI))
    if len(srt) < 2:
        return TWO_PI
    return float(np.min(np.diff(np.concatenate([srt, [srt[0] + TWO_PI]]))))


def que_deviation(spec: SpectralData, h, n: int | None = None) -> float:
    """max_j |<phi_j, O(h) phi_j> - integral of h| over all eigenvectors."""
    from .ergodic import matrix_elements, observable

    obs = observable(h, n or spec.n)
    return float(np.max(np.abs(matrix_elements(spec, obs) - obs.integral)))


def verify_random_quantization(q: RandomQuantization, U, P, smap, h_list, spec_U=None, egorov=True, C=2.0) -> dict:
    """Report on properties (a)-(e) of a randomized quantization; thresholds are left to the caller."""
    from .ergodic import egorov_defect, observable, parse_function

    n = q.spectral.n
    report = {"n": n, "kappa": q.kappa, "seed": q.seed, "epsilon_split": q.epsilon_split}
    report["a"] = {
        "norm_diff": q.norm_diff,
        "bound": C * TWO_PI / q.kappa,
        "constant": q.constant,
        "passed": q.norm_diff <= C * TWO_PI / q.kappa,
    }
    if egorov and q.V is not None:
        rows = []
        for h in h_list:
            hf = parse_function(h)
            dU = egorov_defect(U, smap, hf, n, check=False).defect
            dV = egorov_defect(q.V, smap, hf, n, check=False).defect
            sup = float(np.max(np.abs(observable(hf, n).diagonal)))
            slack = 2 * q.norm_diff * sup
            rows.append({"h": hf.name, "defect_U": dU, "defect_V": dV, "slack": slack, "passed": abs(dV - dU) <= slack + 1e-12})
        report["a"]["egorov"] = rows
    report["b"] = gaussian_distance_columns(q.spectral.vectors).summary()
    report["c"] = [{"h": parse_function(h).name, "max_deviation": que_deviation(q.spectral, h)} for h in h_list]
    if spec_U is not None:
        for row, h in zip(report["c"], h_list):
            row["max_deviation_U"] = que_deviation(spec_U, h)
    gap = min_phase_gap(q.spectral.phases)
    report["d"] = {"min_gap": gap, "passed": gap > 1e-12}
    if q.V is not None:
        entry = verify_unistochastic(q.V, P).entry_error
        report["e"] = {"entry_error": entry, "bound": 2 * q.norm_diff, "passed": entry <= 2 * q.norm_diff + 1e-12}
    return report
