"""Random matrix ensembles and comparison of their spectra with Brown measures.

The ESD of X_n + M_n, X_n from a Gaussian ensemble and M_n deterministic,
approaches the Brown measure of x0 + c_t (or x0 + g_{t,gamma}); the
helpers here sample such matrices, diagonalize them and score the
eigenvalues against a theory grid or a radial CDF.

Every sample is drawn from a Philox stream keyed by (seed, stream index), so
the same spec and seed always give the same bits.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .brown_circular import DensityGrid
from .errors import ConfigError, QrStagnation

KINDS = ("ginibre", "elliptic", "haar_unitary", "dt_upper", "deterministic")
TV_BINS = 50
RESIDUAL_CHECKS = 10


@dataclass(frozen=True, eq=False)
class EnsembleSpec:
    n: int
    kind: str
    seed: int = 0
    t: float = 1.0
    gamma: complex = 0j
    matrix: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown ensemble kind {self.kind!r}")
        if self.n < 2:
            raise ConfigError("n must be >= 2")
        if self.kind in ("ginibre", "elliptic") and not self.t > 0:
            raise ConfigError("t must be > 0")
        if self.kind == "elliptic" and abs(complex(self.gamma)) > self.t + 1e-15:
            raise ConfigError("|gamma| must not exceed t")
        if self.kind == "deterministic":
            m = np.asarray(self.matrix)
            if m.shape != (self.n, self.n):
                raise ConfigError(f"matrix must be {self.n}x{self.n}")


def rng_for(seed: int, stream: int = 0) -> np.random.Generator:
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, int(stream)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _complex_gaussian(rng, shape, var):
    """Circular complex Gaussian with E|z|^2 = var."""
    s = math.sqrt(var / 2)
    return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _hermitian_gaussian(rng, n, var):
    """Hermitian matrix with semicircle limit of variance ``var``."""
    g = _complex_gaussian(rng, (n, n), var / n)
    return (g + g.conj().T) / math.sqrt(2)


def sample(spec: EnsembleSpec, stream: int = 0) -> np.ndarray:
    n = spec.n
    if spec.kind == "deterministic":
        return np.array(spec.matrix, dtype=complex)
    rng = rng_for(spec.seed, stream)
    if spec.kind == "ginibre":
        return _complex_gaussian(rng, (n, n), spec.t / n)
    if spec.kind == "elliptic":
        g = complex(spec.gamma)
        t1, t2 = (spec.t + abs(g)) / 2, (spec.t - abs(g)) / 2
        phase = 1.0 if g == 0 else np.sqrt(g / abs(g))
        h1 = _hermitian_gaussian(rng, n, t1)
        h2 = _hermitian_gaussian(rng, n, t2) if t2 > 0 else np.zeros((n, n), complex)
        return phase * (h1 + 1j * h2)
    if spec.kind == "haar_unitary":
        q, r = np.linalg.qr(_complex_gaussian(rng, (n, n), 1.0))
        d = np.diag(r)
        return q * (d / np.abs(d))[None, :]
    # dt_upper: strictly upper entries, real and imaginary parts of variance 1/(2n)
    a = _complex_gaussian(rng, (n, n), 1.0 / n)
    return np.triu(a, k=1)


def sample_sum(specs, seed: Optional[int] = None) -> np.ndarray:
    """Sum of independent samples; term k uses stream k of its own seed."""
    specs = list(specs)
    if not specs:
        raise ConfigError("need at least one ensemble")
    n = specs[0].n
    if any(s.n != n for s in specs):
        raise ConfigError("all summands must share n")
    out = np.zeros((n, n), dtype=complex)
    for k, s in enumerate(specs):
        out += sample(s if seed is None else _reseed(s, seed), stream=k)
    return out


def _reseed(spec, seed):
    return EnsembleSpec(spec.n, spec.kind, seed, spec.t, spec.gamma, spec.matrix)


def three_atom_diagonal(n: int, atoms=((-2.0, 0.4), (-0.8, 0.1), (1.0, 0.5))) -> np.ndarray:
    """Diagonal matrix whose eigenvalue counts follow the atom weights."""
    counts = [int(round(p * n)) for _, p in atoms]
    counts[-1] = n - sum(counts[:-1])
    return np.diag(np.concatenate([np.full(c, x) for (x, _), c in zip(atoms, counts)])).astype(complex)


# ----------------------------------------------------------------------------
# eigenvalues
# ----------------------------------------------------------------------------

def _inverse_iteration(a, lam, rng, steps=3):
    n = a.shape[0]
    shift = lam + 1e-10 * max(1.0, abs(lam)) * (1 + 1j)
    m = a - shift * np.eye(n)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    for _ in range(steps):
        v = np.linalg.solve(m, v)
        v /= np.linalg.norm(v)
    return v


def eigenvalues(matrix, check: bool = True, seed: int = 0) -> np.ndarray:
    """All eigenvalues, with an inverse-iteration residual check on a few of them."""
    a = np.asarray(matrix, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigError("matrix must be square")
    n = a.shape[0]
    if n > 4096:
        raise ConfigError("n > 4096 is out of scope")
    try:
        eig = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise QrStagnation(str(exc)) from exc
    if check and n > 0:
        rng = rng_for(seed, 1 << 20)
        norm = np.linalg.norm(a, 2)
        for i in rng.choice(n, size=min(RESIDUAL_CHECKS, n), replace=False):
            v = _inverse_iteration(a, eig[i], rng)
            res = np.linalg.norm(a @ v - eig[i] * v)
            if res > 1e-8 * max(norm, 1e-300):
                raise QrStagnation(f"eigenpair residual {res:.3g} at index {i}")
    return eig


# ----------------------------------------------------------------------------
# comparison
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EsdReport:
    eigenvalues: np.ndarray
    binned_tv: float
    radial_ks: Optional[float]

    def to_json(self):
        return {
            "n": int(self.eigenvalues.size),
            "binned_tv": self.binned_tv,
            "radial_ks": self.radial_ks,
        }

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("re,im\n")
            for z in self.eigenvalues:
                fh.write(f"{z.real:.17g},{z.imag:.17g}\n")


Theory = Union[DensityGrid, Callable[[float], float]]


def _grid_box(grid):
    return grid.x_min, grid.x_max, grid.y_min, grid.y_max


def _radial_box(cdf, eigs):
    r = max(float(np.max(np.abs(eigs))), _radius_of_support(cdf))
    return -r, r, -r, r


def _radius_of_support(cdf, hi=1.0):
    while cdf(hi) < 1.0 - 1e-12 and hi < 1e6:
        hi *= 2
    return hi


def _bin_edges(box, eigs, bins):
    x0, x1, y0, y1 = box
    x0, x1 = min(x0, eigs.real.min()), max(x1, eigs.real.max())
    y0, y1 = min(y0, eigs.imag.min()), max(y1, eigs.imag.max())
    pad = 1e-9 * max(1.0, x1 - x0, y1 - y0)
    return np.linspace(x0 - pad, x1 + pad, bins + 1), np.linspace(y0 - pad, y1 + pad, bins + 1)


def _overlap(lo, step, count, edges):
    """Fraction of each of ``count`` cells [lo + k step, lo + (k+1) step] inside each bin."""
    a = lo + np.arange(count) * step
    left = np.maximum(a[:, None], edges[None, :-1])
    right = np.minimum(a[:, None] + step, edges[None, 1:])
    return np.clip(right - left, 0.0, None) / step


def _grid_bin_mass(grid, ex, ey):
    """Theory grid read as piecewise constant, integrated over the comparison bins."""
    mass = np.where(grid.mask, np.nan_to_num(grid.values), 0.0) * grid.cell_area
    wx = _overlap(grid.x_min, grid.dx, grid.nx, ex)
    wy = _overlap(grid.y_min, grid.dy, grid.ny, ey)
    return wx.T @ mass @ wy


def _radial_bin_mass(cdf, ex, ey, sub=8):
    """Bin masses of a rotation-invariant law: density F'(r) / (2 pi r) on a sub-grid."""
    dx, dy = ex[1] - ex[0], ey[1] - ey[0]
    fx = ex[0] + (np.arange((ex.size - 1) * sub) + 0.5) * dx / sub
    fy = ey[0] + (np.arange((ey.size - 1) * sub) + 0.5) * dy / sub
    r = np.hypot(fx[:, None], fy[None, :])
    step = 1e-6 * max(1.0, float(r.max()))
    vcdf = np.vectorize(cdf, otypes=[float])
    rr = r.ravel()
    dens = (vcdf(rr + step) - vcdf(np.maximum(rr - step, 0.0))) / (rr + step - np.maximum(rr - step, 0.0))
    dens = dens / (2 * math.pi * np.maximum(rr, 1e-300))
    fine = dens.reshape(r.shape) * (dx / sub) * (dy / sub)
    nx, ny = ex.size - 1, ey.size - 1
    return fine.reshape(nx, sub, ny, sub).sum(axis=(1, 3))


def binned_tv(eigs, theory: Theory, bins: int = TV_BINS) -> float:
    eigs = np.asarray(eigs, dtype=complex).ravel()
    if isinstance(theory, DensityGrid):
        ex, ey = _bin_edges(_grid_box(theory), eigs, bins)
        q = _grid_bin_mass(theory, ex, ey)
    else:
        ex, ey = _bin_edges(_radial_box(theory, eigs), eigs, bins)
        q = _radial_bin_mass(theory, ex, ey)
    q = q / q.sum()
    p, _, _ = np.histogram2d(eigs.real, eigs.imag, bins=[ex, ey])
    p = p / eigs.size
    return float(min(1.0, 0.5 * np.abs(p - q).sum()))


def _grid_radial_cdf(grid):
    pts = grid.points.ravel()
    mass = np.where(grid.mask, np.nan_to_num(grid.values), 0.0).ravel() * grid.cell_area
    order = np.argsort(np.abs(pts))
    radii = np.abs(pts)[order]
    cum = np.cumsum(mass[order])
    cum /= cum[-1]

    def cdf(r):
        k = np.searchsorted(radii, r, side="right")
        return 0.0 if k == 0 else float(cum[k - 1])

    return cdf


def radial_ks(eigs, cdf: Callable[[float], float]) -> float:
    """sup_r |F_emp(r) - F(r)| over both sides of every jump."""
    r = np.sort(np.abs(np.asarray(eigs, dtype=complex).ravel()))
    m = r.size
    f = np.array([cdf(x) for x in r])
    upper = np.arange(1, m + 1) / m - f
    lower = f - np.arange(m) / m
    return float(min(1.0, max(upper.max(), lower.max(), 0.0)))


def esd_compare(eigs, theory: Theory, rotation_invariant: bool = False,
                bins: int = TV_BINS) -> EsdReport:
    eigs = np.asarray(eigs, dtype=complex).ravel()
    if eigs.size < 100:
        raise ConfigError("esd_compare needs at least 100 eigenvalues")
    tv = binned_tv(eigs, theory, bins)
    ks = None
    if rotation_invariant or not isinstance(theory, DensityGrid):
        cdf = _grid_radial_cdf(theory) if isinstance(theory, DensityGrid) else theory
        ks = radial_ks(eigs, cdf)
    return EsdReport(eigs, tv, ks)


def sample_from_grid(grid: DensityGrid, n: int, seed: int) -> np.ndarray:
    """Draw points from a theory grid: pick a cell by mass, then uniform inside it."""
    rng = rng_for(seed, 7)
    mass = np.where(grid.mask, np.nan_to_num(grid.values), 0.0).ravel()
    mass = mass / mass.sum()
    idx = rng.choice(mass.size, size=n, p=mass)
    pts = grid.points.ravel()[idx]
    jitter = (rng.uniform(-0.5, 0.5, n) * grid.dx) + 1j * (rng.uniform(-0.5, 0.5, n) * grid.dy)
    return pts + jitter


def circular_law_cdf(t: float = 1.0):
    return lambda r: min(r * r / t, 1.0)


# ----------------------------------------------------------------------------
# repetitions
# ----------------------------------------------------------------------------

def ensemble_eigenvalues(specs, seeds, workers: int = 1, check: bool = True) -> list:
    """Eigenvalues of sample_sum(specs) for every seed, optionally in threads."""
    specs = list(specs)

    def one(seed):
        return eigenvalues(sample_sum(specs, seed=seed), check=check, seed=seed)

    seeds = list(seeds)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, seeds))
    return [one(s) for s in seeds]
