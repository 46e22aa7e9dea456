"""Closed forms for selfadjoint x0 with spectral measure mu.

    v_t(a)   positive root of int ((a-x)^2 + v^2)^-1 dmu = 1/t, else 0
    h_t(a) = t int (a-u) / ((a-u)^2 + v_t(a)^2) dmu(u)
    psi_t  = a + h_t

Xi_t is {a + ib : |b| < v_t(a)} and the Brown density of x0 + c_t there is
psi_t'(a) / (2 pi t), independent of b.  For the twisted elliptic case put
tau = t - gamma; the map Phi is affine in b and the shear

    delta(a) = a + (1 - |tau|^2 / (t Re tau)) h_t(a)

is increasing, which makes Phi invertible on Xi_t.

v_t is w(0; a, t) for the same operator at the real point a, so the
generic subordination solver is reused here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GammaEqualsT, OutsideImage, OutsideUt
from .spectral_core import Measure1D, SelfAdjoint, cauchy_transform, kernel_for
from .subordination import solve_w0_many

BISECT_TOL = 1e-12


def _op(mu):
    return SelfAdjoint(mu)


def v_t_many(mu: Measure1D, t: float, a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return solve_w0_many(_op(mu), a.astype(complex), t).w.reshape(a.shape)


def v_t(mu: Measure1D, t: float, a: float) -> float:
    return float(v_t_many(mu, t, [a])[0])


def _profile_terms(mu, t, a):
    """v, h and h' at real points a (arrays)."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    kern = kernel_for(_op(mu), a.astype(complex))
    sol = solve_w0_many(_op(mu), a.astype(complex), t, kernel=kern)
    v = sol.w
    rf = kern.full(v)
    h = t * rf.f2.real
    inside = sol.in_xi_t
    # implicit differentiation of the v_t equation:
    #   h' = -1 + 2 t v^2 int D^-2 + 2 t (int (a-u) D^-2)^2 / int D^-2  (inside U_t)
    #   h' = -t int (a-u)^-2                                              (outside)
    with np.errstate(divide="ignore", invalid="ignore"):
        dh_in = -1.0 + 2 * t * v ** 2 * rf.f3 + 2 * t * rf.f5.real ** 2 / rf.f3
    dh = np.where(inside, dh_in, -t * rf.f1)
    return v, h, dh, inside


def h_t(mu: Measure1D, t: float, a: float) -> float:
    return float(_profile_terms(mu, t, a)[1][0])


def psi_t(mu: Measure1D, t: float, a: float) -> float:
    return float(a + _profile_terms(mu, t, a)[1][0])


def h_t_many(mu, t, a):
    return _profile_terms(mu, t, a)[1]


def psi_t_many(mu, t, a):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    return a + _profile_terms(mu, t, a)[1]


def h_t_prime(mu: Measure1D, t: float, a: float) -> float:
    """Exact derivative of h_t (implicit differentiation)."""
    return float(_profile_terms(mu, t, a)[2][0])


def psi_t_prime(mu: Measure1D, t: float, a: float) -> float:
    return 1.0 + h_t_prime(mu, t, a)


def psi_t_prime_fd(mu: Measure1D, t: float, a: float, step: float = 1e-3) -> float:
    """Five-point central difference of psi_t; the stencil must stay in U_t."""
    for _ in range(30):
        nodes = a + step * np.array([-2.0, -1.0, 1.0, 2.0])
        v, h, _, inside = _profile_terms(mu, t, nodes)
        if inside.all():
            p = nodes + h
            return float((p[0] - 8 * p[1] + 8 * p[2] - p[3]) / (12 * step))
        step /= 2
    raise OutsideUt(f"a={a} is not in U_t")


def density_circular_sa(mu: Measure1D, t: float, a: float) -> float:
    """psi_t'(a) / (2 pi t) from finite differences of psi_t."""
    if v_t(mu, t, a) <= 0:
        raise OutsideUt(f"v_t({a}) = 0")
    return psi_t_prime_fd(mu, t, a) / (2 * math.pi * t)


def semicircle_add_density(mu: Measure1D, t: float, x: float) -> float:
    """Density of mu (+) semicircle_t at x, through x = psi_t(a)."""
    a = _invert_increasing(lambda s: psi_t_many(mu, t, s), x)
    v = v_t(mu, t, a)
    return v / (math.pi * t)


def _invert_increasing(func, target, tol=BISECT_TOL):
    """Solve func(a) = target for an increasing func by bracketing + bisection."""
    lo, hi = target - 1.0, target + 1.0
    while func([lo])[0] > target:
        lo -= 2 * (hi - lo)
    while func([hi])[0] < target:
        hi += 2 * (hi - lo)
    while hi - lo > tol * max(1.0, abs(lo), abs(hi)):
        # evaluate several interior points per sweep to cut Python overhead
        nodes = np.linspace(lo, hi, 9)[1:-1]
        vals = func(nodes)
        k = int(np.searchsorted(vals, target))
        lo = nodes[k - 1] if k > 0 else lo
        hi = nodes[k] if k < nodes.size else hi
    return 0.5 * (lo + hi)


# ----------------------------------------------------------------------------
# twisted elliptic deformation
# ----------------------------------------------------------------------------

def _tau(t, gamma):
    tau = t - complex(gamma)
    if tau.real <= 0:
        raise GammaEqualsT("Re(t - gamma) must be > 0")
    return tau


def _shear_coeff(t, tau):
    return 1.0 - abs(tau) ** 2 / (t * tau.real)


def phi_sa(mu: Measure1D, t: float, gamma: complex, lam: complex) -> complex:
    """Phi_{t,gamma}(lam) in closed form."""
    lam = complex(lam)
    gamma = complex(gamma)
    a, b = lam.real, lam.imag
    v = v_t(mu, t, a)
    if abs(b) < v:
        tau = t - gamma
        h = h_t(mu, t, a)
        return a + h - tau * h / t + 1j * tau * b / t
    return lam + gamma * cauchy_transform(mu, lam)


def delta_sa(mu: Measure1D, t: float, gamma: complex, a: float) -> float:
    tau = _tau(t, gamma)
    return a + _shear_coeff(t, tau) * h_t(mu, t, a)


def jacobian_sa(mu: Measure1D, t: float, gamma: complex, a: float) -> np.ndarray:
    """Jacobian of (a, b) -> (Re Phi, Im Phi) on Xi_t (independent of b)."""
    tau = t - complex(gamma)
    dh = h_t_prime(mu, t, a)
    return np.array([[1 + (1 - tau.real / t) * dh, -tau.imag / t],
                     [-(tau.imag / t) * dh, tau.real / t]])


def det_jac_sa(mu: Measure1D, t: float, gamma: complex, a: float) -> float:
    tau = _tau(t, gamma)
    return tau.real / t * (1 + _shear_coeff(t, tau) * h_t_prime(mu, t, a))


def density_elliptic_sa(mu: Measure1D, t: float, gamma: complex, z: complex) -> float:
    """Brown density of x0 + g_{t,gamma} at z, by inverting Phi."""
    tau = _tau(t, gamma)
    z = complex(z)
    c = _shear_coeff(t, tau)
    target = z.real + tau.imag / tau.real * z.imag
    a = _invert_increasing(lambda s: np.asarray(s) + c * h_t_many(mu, t, s), target)
    v, h, dh, inside = (x[0] for x in _profile_terms(mu, t, a))
    b = (t * z.imag + tau.imag * h) / tau.real
    if not (inside and abs(b) < v):
        raise OutsideImage(f"z={z} is not in the image of Xi_t")
    return (1 + dh) / (2 * math.pi * tau.real * (1 + c * dh))


# ----------------------------------------------------------------------------
# tabulated profile
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BianeProfile:
    mu: Measure1D
    t: float
    a: np.ndarray
    v: np.ndarray
    psi: np.ndarray
    h: np.ndarray
    gamma: complex = 0j

    @property
    def delta(self):
        tau = self.t - self.gamma
        return self.a + _shear_coeff(self.t, tau) * self.h

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("a,v,psi,h,delta\n")
            for row in zip(self.a, self.v, self.psi, self.h, self.delta):
                fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def biane_profile(mu: Measure1D, t: float, gamma: complex = 0j, base: int = 512,
                  max_rounds: int = 6) -> BianeProfile:
    """Sample v_t, psi_t, h_t on an adaptively refined grid."""
    lo, hi = mu.support_bounds()
    pad = 3 * math.sqrt(t)
    a = np.linspace(lo - pad, hi + pad, base)
    for _ in range(max_rounds):
        _, _, dh, _ = _profile_terms(mu, t, a)
        dpsi = 1 + dh
        jump = np.abs(np.diff(dpsi)) > 0.05 * np.maximum(np.abs(dpsi[:-1]), 1e-3)
        if not jump.any():
            break
        mids = 0.5 * (a[:-1] + a[1:])[jump]
        a = np.sort(np.concatenate([a, mids]))
    v, h, _, _ = _profile_terms(mu, t, a)
    return BianeProfile(mu, t, a, v, a + h, h, complex(gamma))
