"""Brown measure of x0 + c_t: log-determinants, densities and grids.

Inside Xi_t, with w0 = w(0; lam, t),

    2 log det(x0 + c_t - lam) = log det(h(w0)) - w0^2 / t,

and the density has two independent expressions:

    positive form   (|f5|^2 / f3 + w0^2 f4) / pi
    derivative form (1/t - d/dlambar tr[x0* h^-1]) / pi

Outside Xi_t the determinant is that of x0 - lam and the density evaluator
returns 0 (all shipped models carry no mass there).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import StencilOutsideDomain
from .spectral_core import OperatorModel, kernel_for, log_fk_det_shifted
from .subordination import solve_w0, solve_w0_many


def fd_step(lam) -> float:
    return 1e-5 * max(1.0, abs(lam))


def log_fk_det_circular(op: OperatorModel, lam: complex, t: float) -> float:
    """log det(x0 + c_t - lam)."""
    sol = solve_w0(op, lam, t)
    if sol.in_xi_t:
        return 0.5 * (log_fk_det_shifted(op, lam, sol.w) - sol.w ** 2 / t)
    return 0.5 * log_fk_det_shifted(op, lam, 0.0)


def log_fk_det_circular_many(op: OperatorModel, lam, t: float) -> np.ndarray:
    shape = np.shape(lam)
    pts = np.asarray(lam, dtype=complex).ravel()
    kern = kernel_for(op, pts)
    sol = solve_w0_many(op, pts, t, kernel=kern)
    val = kern.logdet(sol.w) - np.where(sol.in_xi_t, sol.w ** 2 / t, 0.0)
    return (0.5 * val).reshape(shape)


def _density_and_mask(op, pts, t):
    out = np.zeros(pts.shape)
    kern = kernel_for(op, pts)
    sol = solve_w0_many(op, pts, t, kernel=kern)
    inside = sol.in_xi_t
    if inside.any():
        sub = kernel_for(op, pts[inside])
        w0 = sol.w[inside]
        rf = sub.full(w0)
        out[inside] = (np.abs(rf.f5) ** 2 / rf.f3 + w0 ** 2 * rf.f4) / math.pi
    return out, inside


def density_circular_many(op: OperatorModel, lam, t: float) -> np.ndarray:
    """Positive-form density at every point of an array (0 outside Xi_t)."""
    shape = np.shape(lam)
    return _density_and_mask(op, np.asarray(lam, dtype=complex).ravel(), t)[0].reshape(shape)


def density_circular(op: OperatorModel, lam: complex, t: float) -> float:
    return float(density_circular_many(op, [lam], t)[0])


def _trace_x0_star_hinv(op, pts, t):
    """tr[x0* h^-1] at w0(lam); equals conj(lam) f1 - f2."""
    kern = kernel_for(op, pts)
    sol = solve_w0_many(op, pts, t, kernel=kern)
    if not sol.in_xi_t.all():
        raise StencilOutsideDomain("finite-difference stencil left Xi_t")
    rf = kern.full(sol.w)
    return np.conj(pts) * rf.f1 - rf.f2


def wirtinger_dbar(func, lam: complex, step: float) -> complex:
    """Central-difference d/dlambar = (d/dx + i d/dy) / 2 of a vectorized func."""
    pts = lam + np.array([step, -step, 1j * step, -1j * step])
    v = func(pts)
    dx = (v[0] - v[1]) / (2 * step)
    dy = (v[2] - v[3]) / (2 * step)
    return 0.5 * (dx + 1j * dy)


def density_circular_fd(op: OperatorModel, lam: complex, t: float) -> float:
    """Derivative-form density by central differences (re-solving w0 at each node)."""
    lam = complex(lam)
    d = wirtinger_dbar(lambda p: _trace_x0_star_hinv(op, p, t), lam, fd_step(lam))
    return float(((1.0 / t) - d).real / math.pi)


def laplacian_density(op: OperatorModel, lam: complex, t: float, step=2e-3) -> float:
    """(1/2pi) Laplacian of log det(x0 + c_t - lam) by the 5-point stencil."""
    lam = complex(lam)
    pts = lam + step * np.array([0, 1, -1, 1j, -1j])
    v = log_fk_det_circular_many(op, pts, t)
    lap = (v[1] + v[2] + v[3] + v[4] - 4 * v[0]) / step ** 2
    return float(lap / (2 * math.pi))


# ----------------------------------------------------------------------------
# grids
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DensityGrid:
    """Cell-centred density samples; ``values`` is NaN outside Xi_t.

    Arrays are indexed [ix, iy].
    """

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int
    ny: int
    values: np.ndarray
    mask: np.ndarray
    t: float = float("nan")

    @property
    def dx(self):
        return (self.x_max - self.x_min) / self.nx

    @property
    def dy(self):
        return (self.y_max - self.y_min) / self.ny

    @property
    def cell_area(self):
        return self.dx * self.dy

    @property
    def xs(self):
        return self.x_min + (np.arange(self.nx) + 0.5) * self.dx

    @property
    def ys(self):
        return self.y_min + (np.arange(self.ny) + 0.5) * self.dy

    @property
    def points(self):
        return self.xs[:, None] + 1j * self.ys[None, :]

    @property
    def mass(self):
        return float(np.where(self.mask, np.nan_to_num(self.values), 0.0).sum() * self.cell_area)

    def to_csv(self, path):
        pts = self.points
        with open(path, "w") as fh:
            fh.write("x,y,in_xi,density\n")
            for ix in range(self.nx):
                for iy in range(self.ny):
                    v = self.values[ix, iy]
                    dens = "" if np.isnan(v) else f"{v:.17g}"
                    fh.write(f"{pts[ix, iy].real:.17g},{pts[ix, iy].imag:.17g},"
                             f"{int(self.mask[ix, iy])},{dens}\n")

    def to_json(self):
        return {
            "x_min": self.x_min, "x_max": self.x_max, "y_min": self.y_min, "y_max": self.y_max,
            "nx": self.nx, "ny": self.ny, "cell_area": self.cell_area, "mass": self.mass,
            "values": [[None if np.isnan(v) else float(v) for v in row] for row in self.values],
            "mask": self.mask.astype(int).tolist(),
        }


def _chunks(n, k):
    edges = np.linspace(0, n, k + 1).astype(int)
    return [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def density_grid(op: OperatorModel, t: float, bounds, resolution, workers: int = 1,
                 chunk: int = 20000) -> DensityGrid:
    """Density of x0 + c_t at cell centres of a rectangle.

    ``bounds`` = (x_min, x_max, y_min, y_max), ``resolution`` = (nx, ny).
    """
    x_min, x_max, y_min, y_max = map(float, bounds)
    nx, ny = map(int, resolution)
    if nx < 2 or ny < 2:
        raise ValueError("grid resolution must be at least 2 x 2")
    shell = DensityGrid(x_min, x_max, y_min, y_max, nx, ny, None, None, t)
    pts = shell.points.ravel()
    dens = np.empty(pts.shape)
    mask = np.empty(pts.shape, dtype=bool)

    def work(span):
        a, b = span
        dens[a:b], mask[a:b] = _density_and_mask(op, pts[a:b], t)

    spans = _chunks(pts.size, max(1, math.ceil(pts.size / chunk)))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(work, spans))
    else:
        for sp in spans:
            work(sp)
    values = np.where(mask, dens, np.nan).reshape(nx, ny)
    return DensityGrid(x_min, x_max, y_min, y_max, nx, ny, values, mask.reshape(nx, ny), t)
