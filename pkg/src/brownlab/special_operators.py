"""Closed forms for R-diagonal operators, the Haar unitary and the DT operator.

R-diagonal T with h_T(s) = s tr[(T*T + s^2)^-1]:

    inner radius  lambda1 = tr[(T*T)^-1]^(-1/2)
    outer radius  lambda2 = tr[T*T]^(1/2)
    s(r, eps)     root of (s - eps)^2 - (s - eps)/h_T(s) + r^2 = 0
    mass of {|z| <= r} = s(r,0)^2 / (s(r,0)^2 + r^2)

and Phi maps the circle of radius r onto an ellipse with semi-axes
r -+ |gamma| g(r) / r, g being that radial CDF.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import OutsideAnnulus
from .spectral_core import HaarUnitary, Measure1D, OperatorModel, Zero
from .subordination import solve_w


class _Infinite:
    """Tag for s(r, 0) above the outer radius."""

    def __repr__(self):
        return "S_INFINITE"


S_INFINITE = _Infinite()


@dataclass(frozen=True)
class RDiagonalProfile:
    h_T: Callable[[float], float]
    lambda1: float
    lambda2: float

    @classmethod
    def from_singular_values(cls, mu: Measure1D) -> "RDiagonalProfile":
        """Profile of an R-diagonal T whose |T| has law ``mu``."""
        # a density piece reaching 0 makes the inverse moment diverge as well
        touches = any(x == 0 and p > 0 for x, p in mu.atoms) or any(pc.lo <= 0 for pc in mu.pieces)
        inv2 = math.inf if touches else mu.integrate(lambda u: 1.0 / (u * u)).real
        sec = mu.integrate(lambda u: u * u).real
        lam1 = 0.0 if not math.isfinite(inv2) else 1.0 / math.sqrt(inv2)

        def h(s):
            return s * mu.integrate(lambda u: 1.0 / (u * u + s * s)).real

        return cls(h, lam1, math.sqrt(sec))

    @classmethod
    def circular(cls, t: float) -> "RDiagonalProfile":
        """T = c_t; |T|^2 is Marchenko-Pastur with rate t."""
        return cls(lambda s: (math.sqrt(s * s + 4 * t) - s) / (2 * t), 0.0, math.sqrt(t))

    @classmethod
    def circular_deformation(cls, op: OperatorModel, t: float) -> "RDiagonalProfile":
        """T + c_t for an R-diagonal x0, with h from the subordination function.

        s tr[((x0 + c_t)^*(x0 + c_t) + s^2)^-1] = (w(s; 0, t) - s) / t.
        """
        if isinstance(op, HaarUnitary):
            lam1, lam2 = math.sqrt(max(1.0 - t, 0.0)), math.sqrt(1.0 + t)
        elif isinstance(op, Zero):
            lam1, lam2 = 0.0, math.sqrt(t)
        else:
            raise TypeError("radii are only known for Zero and HaarUnitary")

        def h(s):
            return (solve_w(op, 0.0, t, s).w - s) / t

        return cls(h, lam1, lam2)


def _s_equation(profile, r, eps):
    def g(s):
        d = s - eps
        return d / profile.h_T(s) - d * d - r * r

    return g


def solve_s(profile: RDiagonalProfile, r: float, eps: float = 0.0, tol=1e-14):
    """Root s(r, eps); for eps = 0 outside (lambda1, lambda2) the limit values."""
    if r <= 0:
        raise ValueError("r must be > 0")
    if eps == 0.0:
        if r <= profile.lambda1:
            return 0.0
        if r >= profile.lambda2:
            return S_INFINITE
    g = _s_equation(profile, r, eps)
    lo = eps
    hi = eps + 1.0
    while g(hi) < 0:
        lo, hi = hi, 2 * hi - eps + 1.0
        if hi > 1e12:
            return S_INFINITE
    from scipy.optimize import brentq

    # keep clear of s = eps, where h_T may only be reachable through a limit
    lo = max(lo, eps + 1e-12 * max(1.0, eps))
    if g(lo) >= 0:
        return lo
    return brentq(g, lo, hi, xtol=tol * max(1.0, hi), rtol=1e-15, maxiter=500)


def brown_cdf_rdiag(profile: RDiagonalProfile, r: float) -> float:
    if r <= profile.lambda1:
        return 0.0
    if r >= profile.lambda2:
        return 1.0
    s = solve_s(profile, r)
    if s is S_INFINITE:
        return 1.0
    return s * s / (s * s + r * r)


def phi_rdiag(profile: RDiagonalProfile, r: float, gamma: complex):
    """Semi-axes (minor, major) of the image of |lam| = r."""
    g = brown_cdf_rdiag(profile, r)
    k = abs(gamma) * g / r
    return r - k, r + k


# ----------------------------------------------------------------------------
# Haar unitary plus circular
# ----------------------------------------------------------------------------

def haar_radii(t: float):
    return math.sqrt(max(1.0 - t, 0.0)), math.sqrt(1.0 + t)


def haar_w0(lam: complex, t: float) -> float:
    lo, hi = haar_radii(t)
    r = abs(lam)
    if not lo < r < hi:
        raise OutsideAnnulus(f"|lam|={r} outside ({lo}, {hi})")
    q = r * r
    return math.sqrt(math.sqrt(4 * q + t * t) - (q + 1))


def haar_cdf(r: float, t: float) -> float:
    lo, hi = haar_radii(t)
    if not lo - 1e-15 <= r <= hi + 1e-15:
        raise OutsideAnnulus(f"r={r} outside [{lo}, {hi}]")
    val = r * r / t + 0.5 - math.sqrt(4 * r * r + t * t) / (2 * t)
    return min(max(val, 0.0), 1.0)


def haar_cdf_clipped(r: float, t: float) -> float:
    lo, hi = haar_radii(t)
    if r <= lo:
        return 0.0
    if r >= hi:
        return 1.0
    return haar_cdf(r, t)


def _check_s(s, t):
    lo, hi = haar_radii(t)
    if not lo * lo - 1 - 1e-15 <= s <= hi * hi - 1 + 1e-15:
        raise OutsideAnnulus(f"s={s} outside [{lo * lo - 1}, {hi * hi - 1}]")


def haar_axes(s: float, t: float):
    """Axes (major, minor) of Phi_{t,t}(circle of radius sqrt(1+s))."""
    _check_s(s, t)
    r = math.sqrt(1 + s)
    minor = (math.sqrt(4 * (1 + s) + t * t) - t) / (2 * r)
    return 2 * r - minor, minor


def haar_axes_gamma(s: float, t: float, gamma: complex):
    """Axes (major, minor) for general |gamma| <= t."""
    a, b = haar_axes(s, t)
    k = abs(gamma) / t
    r = math.sqrt(s + 1)
    return (1 - k) * r + k * a, (1 - k) * r + k * b


# ----------------------------------------------------------------------------
# quasi-nilpotent DT operator plus circular
# ----------------------------------------------------------------------------

def dt_disk_radius(t: float) -> float:
    return 1.0 / math.sqrt(math.log1p(1.0 / t))


def dt_phi(lam: complex, t: float, gamma: complex) -> complex:
    lam = complex(lam)
    return lam + complex(gamma) * lam.conjugate() * math.log1p(1.0 / t)


def dt_density(t: float) -> float:
    return math.log1p(1.0 / t) / math.pi
