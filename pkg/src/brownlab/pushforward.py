"""Transport from x0 + c_t to x0 + g_{t,gamma}.

    Phi(lam)       = lam + gamma p(w(0; lam, t))
    Phi_eps(lam)   = lam + gamma p(w(eps; lam, t))

with p(w) = tr[(lam - x0)* ((lam - x0)(lam - x0)* + w^2)^-1], the second
resolvent functional.  The Brown measure of x0 + g_{t,gamma} is the image of
that of x0 + c_t under Phi.  Where Phi is non-singular we transport
densities; the point-cloud route works even when Phi collapses the plane
(gamma = t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .brown_circular import DensityGrid, density_circular_many, fd_step, log_fk_det_circular
from .errors import ConfigError, EnvelopeFailure, SingularPushforward, StencilOutsideDomain
from .spectral_core import OperatorModel, SelfAdjoint, kernel_for
from .subordination import solve_w0_many, solve_w_many

SINGULAR_FLOOR = 1e-10


@dataclass(frozen=True)
class EllipticParams:
    t: float
    gamma: complex = 0j

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "gamma", complex(self.gamma))
        if not self.t > 0:
            raise ConfigError("t must be > 0")
        if abs(self.gamma) > self.t + 1e-15:
            raise ConfigError("|gamma| must not exceed t")


def _p_many(op, pts, t, eps=None):
    kern = kernel_for(op, pts)
    if eps is None:
        sol = solve_w0_many(op, pts, t, kernel=kern)
        inside = sol.in_xi_t
    else:
        sol = solve_w_many(op, pts, t, eps, kernel=kern)
        inside = solve_w0_many(op, pts, t, kernel=kern).in_xi_t
    return kern.full(sol.w).f2, inside


def phi_many(op: OperatorModel, lam, params: EllipticParams, eps=None, return_mask=False):
    shape = np.shape(lam)
    pts = np.asarray(lam, dtype=complex).ravel()
    if params.gamma == 0:
        z = pts.copy()
        inside = solve_w0_many(op, pts, params.t).in_xi_t if return_mask else None
    else:
        p, inside = _p_many(op, pts, params.t, eps)
        z = pts + params.gamma * p
    if return_mask:
        return z.reshape(shape), inside.reshape(shape)
    return z.reshape(shape)


def phi(op: OperatorModel, lam: complex, params: EllipticParams) -> complex:
    return complex(phi_many(op, [lam], params)[0])


def phi_eps(op: OperatorModel, lam: complex, params: EllipticParams, eps: float) -> complex:
    if eps <= 0:
        raise ValueError("eps must be > 0")
    return complex(phi_many(op, [lam], params, eps=eps)[0])


def p_functional(op: OperatorModel, lam: complex, t: float) -> complex:
    """p(w0) at lam; equals 2 d/dlam log det(x0 + c_t - lam)."""
    return complex(_p_many(op, np.array([lam], dtype=complex), t)[0][0])


# ----------------------------------------------------------------------------
# Jacobians
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class JacobianResult:
    matrix: np.ndarray
    det: float
    fd_matrix: np.ndarray
    fd_det: float


def _fd_jacobians(op, pts, params, steps):
    """Central-difference Jacobians at many points: returns (J, stencil_inside)."""
    stencil = pts[:, None] + steps[:, None] * np.array([1, -1, 1j, -1j])[None, :]
    z, inside = phi_many(op, stencil, params, return_mask=True)
    dzx = (z[:, 0] - z[:, 1]) / (2 * steps)
    dzy = (z[:, 2] - z[:, 3]) / (2 * steps)
    jac = np.empty(pts.shape + (2, 2))
    jac[:, 0, 0], jac[:, 1, 0] = dzx.real, dzx.imag
    jac[:, 0, 1], jac[:, 1, 1] = dzy.real, dzy.imag
    return jac, inside.all(axis=1)


def jacobian_phi(op: OperatorModel, lam: complex, params: EllipticParams) -> JacobianResult:
    lam = complex(lam)
    jac, ok = _fd_jacobians(op, np.array([lam]), params, np.array([fd_step(lam)]))
    if not ok[0]:
        raise StencilOutsideDomain("Jacobian stencil left Xi_t")
    fd = jac[0]
    fd_det = float(np.linalg.det(fd))
    if params.gamma == 0:
        eye = np.eye(2)
        return JacobianResult(eye, 1.0, fd, fd_det)
    if isinstance(op, SelfAdjoint):
        from .selfadjoint_case import jacobian_sa

        mat = jacobian_sa(op.measure, params.t, params.gamma, lam.real)
        return JacobianResult(mat, float(np.linalg.det(mat)), fd, fd_det)
    return JacobianResult(fd, fd_det, fd, fd_det)


def log_fk_det_elliptic(op: OperatorModel, lam: complex, params: EllipticParams):
    """(z, log det(x0 + g_{t,gamma} - z)) with z = Phi(lam)."""
    jr = jacobian_phi(op, lam, params)
    if abs(jr.det) <= SINGULAR_FLOOR:
        raise SingularPushforward(f"Jacobian determinant {jr.det:g} at lam={lam}")
    p = p_functional(op, lam, params.t)
    z = complex(lam) + params.gamma * p
    return z, log_fk_det_circular(op, lam, params.t) + 0.5 * (params.gamma * p * p).real


# ----------------------------------------------------------------------------
# density and point-cloud transport
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PushforwardField:
    lam: np.ndarray
    z: np.ndarray
    jac_det: np.ndarray
    src_density: np.ndarray
    dst_density: np.ndarray  # NaN where transport was refused
    flagged: np.ndarray
    cell_area: float

    @property
    def source_mass(self):
        return float(self.src_density.sum() * self.cell_area)

    @property
    def transported_mass(self):
        ok = ~self.flagged
        return float((self.dst_density[ok] * np.abs(self.jac_det[ok])).sum() * self.cell_area)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("lx,ly,zx,zy,jac,src,dst\n")
            for lam, z, j, s, d in zip(self.lam, self.z, self.jac_det, self.src_density,
                                       self.dst_density):
                dst = "" if np.isnan(d) else f"{d:.17g}"
                fh.write(f"{lam.real:.17g},{lam.imag:.17g},{z.real:.17g},{z.imag:.17g},"
                         f"{j:.17g},{s:.17g},{dst}\n")


def pushforward_density(op: OperatorModel, params: EllipticParams, grid: DensityGrid,
                        singular_floor: float = SINGULAR_FLOOR) -> PushforwardField:
    """Transport every Xi_t cell of ``grid`` through Phi."""
    if not math.isclose(grid.t, params.t) and not math.isnan(grid.t):
        raise ConfigError("grid was computed for a different t")
    lam = grid.points[grid.mask]
    src = grid.values[grid.mask]
    z = phi_many(op, lam, params)
    if params.gamma == 0:
        det = np.ones(lam.shape)
        ok = np.ones(lam.shape, dtype=bool)
    else:
        steps = 1e-5 * np.maximum(1.0, np.abs(lam))
        jac, ok = _fd_jacobians(op, lam, params, steps)
        det = np.linalg.det(jac)
    flagged = ~ok | (np.abs(det) <= singular_floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        dst = np.where(flagged, np.nan, src / np.abs(det))
    return PushforwardField(lam, z, det, src, dst, flagged, grid.cell_area)


def pushforward_pointcloud(op: OperatorModel, params: EllipticParams, n_samples: int, seed: int,
                           envelope: DensityGrid, eps=None, batch: int = 200_000) -> np.ndarray:
    """Sample the Brown measure of x0 + c_t by rejection, then map through Phi."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    finite = envelope.values[np.isfinite(envelope.values)]
    if finite.size == 0 or finite.max() <= 0:
        raise EnvelopeFailure("envelope grid has no cell inside Xi_t")
    bound = 1.05 * float(finite.max())
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    accepted = []
    have = 0
    tried = 0
    while have < n_samples:
        m = batch
        x = rng.uniform(envelope.x_min, envelope.x_max, m)
        y = rng.uniform(envelope.y_min, envelope.y_max, m)
        u = rng.uniform(0.0, bound, m)
        lam = x + 1j * y
        dens = density_circular_many(op, lam, params.t)
        keep = lam[u < dens]
        tried += m
        accepted.append(keep)
        have += keep.size
        if tried >= 10 * batch and have / tried < 1e-4:
            raise EnvelopeFailure(f"acceptance rate {have / tried:.2e} is below 1e-4")
    lam = np.concatenate(accepted)[:n_samples]
    return phi_many(op, lam, params, eps=eps)
