"""Subordination functions w(eps; lam, t) and their scalar oracle.

For eps > 0, w is the unique root in (eps, inf) of

    k(s) = (s - eps) / (s f1(s)) = t,

where f1(s) = tr h(s)^-1 is the first resolvent functional; k increases
strictly so a bracket always exists.  At eps = 0 the equation degenerates to
f1(w) = 1/t, which has a positive root exactly when f1(0) > 1/t, i.e. when
lam lies in the open set Xi_t.

All solvers run on whole arrays of points in lockstep: bisection until the
bracket is narrow, then safeguarded Newton.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BracketFailure, NonConvergence
from .spectral_core import Measure1D, OperatorModel, kernel_for

BISECT_WIDTH = 1e-3
RESIDUAL_TOL = 1e-13
MAX_ITER = 200


@dataclass(frozen=True)
class SubordinationResult:
    w: float
    residual: float
    iterations: int
    in_xi_t: bool


@dataclass(frozen=True)
class SubordinationBatch:
    """Array version of ``SubordinationResult``."""

    w: np.ndarray
    residual: np.ndarray
    iterations: int
    in_xi_t: np.ndarray


def _polish(func, lo, hi, active, max_iter=MAX_ITER):
    """Find the sign change of ``func`` (positive at lo, negative at hi).

    ``func(x)`` returns (value, derivative) arrays.  Works on the entries
    flagged by ``active`` and leaves the others untouched.
    """
    lo, hi = lo.copy(), hi.copy()
    it = 0
    while it < max_iter:
        wide = active & (hi - lo > BISECT_WIDTH * np.maximum(1.0, hi))
        if not wide.any():
            break
        mid = 0.5 * (lo + hi)
        val, _ = func(mid)
        up = val > 0
        lo = np.where(wide & up, mid, lo)
        hi = np.where(wide & ~up, mid, hi)
        it += 1
    x = 0.5 * (lo + hi)
    res = np.zeros_like(x)
    todo = active.copy()
    while it < max_iter and todo.any():
        val, der = func(x)
        res = np.where(active, val, res)
        done = np.abs(val) <= RESIDUAL_TOL
        lo = np.where(val > 0, x, lo)
        hi = np.where(val < 0, x, hi)
        tight = hi - lo <= 4 * np.finfo(float).eps * np.maximum(np.abs(x), 1e-300)
        todo = active & ~done & ~tight
        if not todo.any():
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            step = x - val / der
        bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
        x = np.where(todo, np.where(bad, 0.5 * (lo + hi), step), x)
        it += 1
    if todo.any() and it >= max_iter:
        raise NonConvergence("root polish did not meet the residual tolerance")
    return x, res, it


def _as_points(lam):
    arr = np.asarray(lam, dtype=complex)
    return arr.shape, arr.ravel()


def solve_w0_many(op: OperatorModel, lam, t: float, kernel=None) -> SubordinationBatch:
    """w(0; lam, t) at every point of an array."""
    shape, pts = _as_points(lam)
    kern = kernel if kernel is not None else kernel_for(op, pts)
    with np.errstate(over="ignore"):
        f10 = kern.f1_at_zero()
    inside = f10 > 1.0 / t

    def func(w):
        f1, f3 = kern.f1_f3(w)
        return t * f1 - 1.0, -2.0 * t * w * f3

    lo = np.zeros(pts.shape)
    # f1(w) <= 1/w^2, so f1 < 1/t strictly just above sqrt(t)
    hi = np.full(pts.shape, math.sqrt(t) * (1 + 1e-9))
    w = np.zeros(pts.shape)
    res = np.zeros(pts.shape)
    it = 0
    if inside.any():
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            w, res, it = _polish(func, lo, hi, inside)
        w = np.where(inside, w, 0.0)
    return SubordinationBatch(w.reshape(shape), res.reshape(shape), it, inside.reshape(shape))


def solve_w_many(op: OperatorModel, lam, t: float, eps, kernel=None) -> SubordinationBatch:
    """w(eps; lam, t) for eps > 0 at every point of an array."""
    shape, pts = _as_points(lam)
    eps = np.broadcast_to(np.asarray(eps, dtype=float), shape).ravel()
    if np.any(eps <= 0):
        raise ValueError("eps must be > 0")
    kern = kernel if kernel is not None else kernel_for(op, pts)

    # unknown d = w - eps keeps full relative precision when w is close to eps
    def func(d):
        s = eps + d
        f1, f3 = kern.f1_f3(s)
        h = s * f1
        dh = f1 - 2.0 * s * s * f3
        return t - d / h, -(1.0 / h - d * dh / h ** 2)

    lo = np.zeros(pts.shape)  # k = 0 < t there
    hi = np.full(pts.shape, math.sqrt(t) + 1.0)
    for _ in range(200):
        grow = func(hi)[0] >= 0
        if not grow.any():
            break
        hi = np.where(grow, 2.0 * hi, hi)
    else:
        raise BracketFailure("could not bracket w(eps)")
    active = np.ones(pts.shape, dtype=bool)
    d, res, it = _polish(func, lo, hi, active)
    w = eps + d
    # report k(w) - t rather than t - k(w)
    return SubordinationBatch(w.reshape(shape), (-res).reshape(shape), it,
                              np.zeros(shape, dtype=bool))


def _scalar(batch: SubordinationBatch) -> SubordinationResult:
    return SubordinationResult(float(batch.w.ravel()[0]), float(batch.residual.ravel()[0]),
                               int(batch.iterations), bool(batch.in_xi_t.ravel()[0]))


def solve_w(op: OperatorModel, lam: complex, t: float, eps: float) -> SubordinationResult:
    """w(eps; lam, t) at one point."""
    return _scalar(solve_w_many(op, [lam], t, eps))


def solve_w0(op: OperatorModel, lam: complex, t: float) -> SubordinationResult:
    """w(0; lam, t) at one point; zero outside Xi_t."""
    return _scalar(solve_w0_many(op, [lam], t))


def lambda1_squared(op: OperatorModel, lam: complex) -> float:
    """(int u^-2 of the singular law of x0 - lam)^-1, zero when divergent."""
    with np.errstate(over="ignore"):
        f10 = float(kernel_for(op, lam).f1_at_zero()[0])
    return 0.0 if not math.isfinite(f10) else 1.0 / f10


def in_xi_t(op: OperatorModel, lam: complex, t: float) -> bool:
    if t <= 0:
        raise ValueError("t must be > 0")
    with np.errstate(over="ignore"):
        return bool(kernel_for(op, lam).f1_at_zero()[0] > 1.0 / t)


def in_xi_t_many(op: OperatorModel, lam, t: float) -> np.ndarray:
    shape, pts = _as_points(lam)
    with np.errstate(over="ignore"):
        return (kernel_for(op, pts).f1_at_zero() > 1.0 / t).reshape(shape)


# ----------------------------------------------------------------------------
# scalar oracle through free convolution with a semicircle
# ----------------------------------------------------------------------------

def symmetrize(mu: Measure1D) -> Measure1D:
    """(mu(B) + mu(-B)) / 2 for a measure on [0, inf)."""
    lo, _ = mu.support_bounds()
    if lo < 0:
        raise ValueError("symmetrize expects a measure on [0, inf)")
    pairs = []
    for x, p in mu.atoms:
        if x == 0.0:
            pairs.append((0.0, p))
        else:
            pairs += [(-x, p / 2), (x, p / 2)]
    pieces = []
    from .spectral_core import DensityPiece

    for pc in mu.pieces:
        half = pc.samples / 2
        if pc.lo == 0.0:
            pieces.append(DensityPiece(-pc.hi, pc.hi, np.concatenate([half[::-1], half[1:]])))
        else:
            pieces += [DensityPiece(-pc.hi, -pc.lo, half[::-1]), DensityPiece(pc.lo, pc.hi, half)]
    return Measure1D(atoms=tuple(sorted(pairs)), pieces=tuple(pieces))


def semicircle_cauchy(z, t):
    """Cauchy transform of the variance-t semicircle, branch ~ 1/z at infinity."""
    r = 2.0 * np.sqrt(t)
    return (z - np.sqrt(z - r) * np.sqrt(z + r)) / (2.0 * t)


def scalar_omega1(mu1: Measure1D, t: float, z: complex, tol=1e-13, max_iter=100_000) -> complex:
    """Subordination function of mu1 in mu1 (+) semicircle_t at z (Im z > 0).

    Iterates omega <- z + H2(z + H1(omega)) with H1 = F_mu1 - id and
    H2 = -t G_semicircle.
    """
    if not mu1.is_symmetric():
        raise ValueError("scalar_omega1 expects a symmetric measure")
    z = complex(z)
    if z.imag <= 0:
        raise ValueError("Im z must be > 0")
    locs, wts = mu1.atom_locations, mu1.atom_weights

    if mu1.pieces:
        from .spectral_core import cauchy_transform

        def g1(om):
            return cauchy_transform(mu1, om)
    else:
        def g1(om):
            return complex(np.sum(wts / (om - locs)))

    def step(om):
        h1 = 1.0 / g1(om) - om
        return z - t * complex(semicircle_cauchy(z + h1, t))

    om = z
    damping = 1.0
    flips = 0
    prev_dre = 0.0
    for _ in range(max_iter):
        new = step(om)
        new = om + damping * (new - om)
        d = new - om
        if d.real * prev_dre < 0:
            flips += 1
            if flips >= 10 and damping == 1.0:
                damping = 0.5
        prev_dre = d.real
        om = new
        if abs(d) < tol:
            return om
    raise NonConvergence("omega_1 iteration did not converge")
