"""Operator models and trace functionals of shifted resolvents.

For an operator x0 and a point lam of the plane we write A = lam - x0 and

    h = A* A + w^2,    k = A A* + w^2.

Everything downstream consumes five normalized traces of these resolvents
(see ``ResolventFunctionals``) plus the log-determinant of h.  The heavy
lifting lives in small "kernel" objects that are prepared once for a batch
of points and then evaluated repeatedly at different w, which is what the
root finders need.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import (
    ConfigError,
    DispatchToClosedForm,
    DivergentIntegral,
    NegativeInfinity,
    PoleOnContour,
)

MASS_TOL = 1e-12
MIN_PIECE_SAMPLES = 64
QUAD_ABS_TOL = 1e-12
MAX_GK_SEGMENTS = 200_000


# ----------------------------------------------------------------------------
# measures on the real line
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DensityPiece:
    """Piecewise linear density sampled on a uniform grid of [lo, hi]."""

    lo: float
    hi: float
    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        if not self.hi > self.lo:
            raise ConfigError("density piece needs lo < hi")
        if s.ndim != 1 or s.size < MIN_PIECE_SAMPLES:
            raise ConfigError(f"density piece needs at least {MIN_PIECE_SAMPLES} samples")
        if np.any(s < 0) or not np.all(np.isfinite(s)):
            raise ConfigError("density samples must be finite and >= 0")

    @property
    def nodes(self):
        return np.linspace(self.lo, self.hi, self.samples.size)

    def mass(self):
        return float(np.trapezoid(self.samples, self.nodes))

    def __call__(self, u):
        return np.interp(u, self.nodes, self.samples, left=0.0, right=0.0)


@dataclass(frozen=True, eq=False)
class Measure1D:
    """Probability measure on the real line: atoms plus density pieces."""

    atoms: tuple = ()
    pieces: tuple = ()

    def __post_init__(self):
        atoms = tuple((float(x), float(p)) for x, p in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "pieces", tuple(self.pieces))
        locs = [x for x, _ in atoms]
        if any(p < 0 for _, p in atoms):
            raise ConfigError("atom weights must be >= 0")
        if any(b <= a for a, b in zip(locs, locs[1:])):
            raise ConfigError("atom locations must be strictly increasing")
        spans = sorted((pc.lo, pc.hi) for pc in self.pieces)
        if any(nxt[0] < cur[1] for cur, nxt in zip(spans, spans[1:])):
            raise ConfigError("density pieces overlap")
        if abs(self.total_mass() - 1.0) > MASS_TOL:
            raise ConfigError(f"total mass {self.total_mass()!r} is not 1")

    # constructors ---------------------------------------------------------
    @classmethod
    def from_atoms(cls, pairs):
        merged = {}
        for x, p in pairs:
            merged[float(x)] = merged.get(float(x), 0.0) + float(p)
        return cls(atoms=tuple(sorted(merged.items())))

    @classmethod
    def from_density(cls, func, lo, hi, n=1025):
        """Tabulate ``func`` on [lo, hi] and renormalize to unit mass."""
        n = max(int(n), MIN_PIECE_SAMPLES)
        x = np.linspace(lo, hi, n)
        y = np.clip(np.asarray(func(x), dtype=float), 0.0, None)
        y = y / np.trapezoid(y, x)
        return cls(pieces=(DensityPiece(lo, hi, y),))

    @classmethod
    def semicircle(cls, t=1.0, n=4097):
        r = 2.0 * math.sqrt(t)
        return cls.from_density(lambda x: np.sqrt(np.clip(4 * t - x * x, 0, None)), -r, r, n)

    # queries --------------------------------------------------------------
    @property
    def atom_locations(self):
        return np.array([x for x, _ in self.atoms], dtype=float)

    @property
    def atom_weights(self):
        return np.array([p for _, p in self.atoms], dtype=float)

    def total_mass(self):
        return sum(p for _, p in self.atoms) + sum(pc.mass() for pc in self.pieces)

    def support_bounds(self):
        ends = [x for x, _ in self.atoms]
        for pc in self.pieces:
            ends += [pc.lo, pc.hi]
        return min(ends), max(ends)

    def is_symmetric(self, tol=1e-12):
        a = dict(self.atoms)
        for x, p in self.atoms:
            q = a.get(-x)
            if q is None or abs(p - q) > tol:
                return False
        for pc in self.pieces:
            mirror = [q for q in self.pieces if abs(q.lo + pc.hi) < tol and abs(q.hi + pc.lo) < tol]
            if not mirror or not np.allclose(mirror[0].samples[::-1], pc.samples, atol=tol):
                return False
        return True

    def integrate(self, func, points=None):
        """Integral of a (possibly complex) scalar function against the measure."""
        total = 0j
        for x, p in self.atoms:
            total += p * func(x)
        for pc in self.pieces:
            pts = None if points is None else [q for q in points if pc.lo < q < pc.hi]
            lim = max(200, 4 * pc.samples.size)
            with warnings.catch_warnings():
                # the imaginary part is often identically tiny; quad then
                # reports roundoff against the absolute tolerance
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                re, im = self._piece_quad(func, pc, pts, lim)
            total += re + 1j * im
        return total

    @staticmethod
    def _piece_quad(func, pc, pts, lim):
        re = integrate.quad(lambda u: (func(u) * pc(u)).real, pc.lo, pc.hi,
                            epsabs=QUAD_ABS_TOL, epsrel=1e-12, limit=lim, points=pts)[0]
        im = integrate.quad(lambda u: (func(u) * pc(u)).imag, pc.lo, pc.hi,
                            epsabs=QUAD_ABS_TOL, epsrel=1e-12, limit=lim, points=pts)[0]
        return re, im

    def to_json(self):
        doc = {"type": "selfadjoint", "atoms": [[x, p] for x, p in self.atoms]}
        if self.pieces:
            doc["densities"] = [{"lo": pc.lo, "hi": pc.hi, "samples": pc.samples.tolist()}
                                for pc in self.pieces]
        return doc


def cauchy_transform(mu: Measure1D, z: complex) -> complex:
    """G(z) = int (z - u)^-1 dmu(u)."""
    z = complex(z)
    if z.imag == 0.0:
        x = z.real
        if any(x == a for a, _ in mu.atoms) or any(pc.lo <= x <= pc.hi for pc in mu.pieces):
            raise PoleOnContour(f"z={x} lies on the support")
    return complex(mu.integrate(lambda u: 1.0 / (z - u)))


# ----------------------------------------------------------------------------
# operator models
# ----------------------------------------------------------------------------

class OperatorModel:
    """Tag base class for the deterministic summand x0."""

    normal = False


@dataclass(frozen=True, eq=False)
class SelfAdjoint(OperatorModel):
    measure: Measure1D
    normal = True


@dataclass(frozen=True, eq=False)
class PlanarAtomic(OperatorModel):
    """Normal operator with finitely many eigenvalues (complex) and weights."""

    points: tuple
    normal = True

    def __post_init__(self):
        pts = tuple((complex(z), float(p)) for z, p in self.points)
        if any(p < 0 for _, p in pts):
            raise ConfigError("weights must be >= 0")
        if abs(sum(p for _, p in pts) - 1.0) > MASS_TOL:
            raise ConfigError("planar weights must sum to 1")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True, eq=False)
class FiniteMatrix(OperatorModel):
    """N x N matrix with the normalized trace (1/N) tr."""

    matrix: np.ndarray

    def __post_init__(self):
        a = np.array(self.matrix, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ConfigError("matrix must be square with N >= 1")
        if not np.all(np.isfinite(a)):
            raise ConfigError("matrix entries must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "matrix", a)

    @property
    def n(self):
        return self.matrix.shape[0]


@dataclass(frozen=True)
class Zero(OperatorModel):
    normal = True


@dataclass(frozen=True)
class HaarUnitary(OperatorModel):
    normal = True


@dataclass(frozen=True)
class QuasiNilpotentDT(OperatorModel):
    pass


def operator_from_json(doc) -> OperatorModel:
    """Build an operator from the shared JSON document format."""
    if isinstance(doc, str):
        doc = json.loads(doc)
    if not isinstance(doc, dict) or "type" not in doc:
        raise ConfigError("operator document needs a 'type' field")
    kind = doc["type"]
    try:
        if kind == "selfadjoint":
            pieces = tuple(DensityPiece(d["lo"], d["hi"], d["samples"]) for d in doc.get("densities", ()))
            return SelfAdjoint(Measure1D(atoms=tuple(sorted(map(tuple, doc.get("atoms", ())))), pieces=pieces))
        if kind == "planar":
            return PlanarAtomic(tuple((complex(re, im), p) for re, im, p in doc["atoms"]))
        if kind == "matrix":
            n = int(doc["n"])
            re = np.asarray(doc["entries_re"], dtype=float)
            im = np.asarray(doc.get("entries_im", np.zeros(n * n)), dtype=float)
            if re.size != n * n or im.size != n * n:
                raise ConfigError("matrix entries must have n*n values")
            return FiniteMatrix((re + 1j * im).reshape(n, n))
        if kind == "zero":
            return Zero()
        if kind == "haar_unitary":
            return HaarUnitary()
        if kind == "dt":
            return QuasiNilpotentDT()
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad operator document: {exc}") from exc
    raise ConfigError(f"unknown operator type {kind!r}")


def operator_to_json(op: OperatorModel) -> dict:
    if isinstance(op, SelfAdjoint):
        return op.measure.to_json()
    if isinstance(op, PlanarAtomic):
        return {"type": "planar", "atoms": [[z.real, z.imag, p] for z, p in op.points]}
    if isinstance(op, FiniteMatrix):
        a = op.matrix
        return {"type": "matrix", "n": op.n, "entries_re": a.real.ravel().tolist(),
                "entries_im": a.imag.ravel().tolist()}
    return {"type": {Zero: "zero", HaarUnitary: "haar_unitary", QuasiNilpotentDT: "dt"}[type(op)]}


# ----------------------------------------------------------------------------
# functionals
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ResolventFunctionals:
    """Normalized traces at (lam, w); A = lam - x0.

    f1 = tr h^-1, f2 = tr A* k^-1, f3 = tr h^-2, f4 = tr h^-1 k^-1,
    f5 = tr A h^-2.  Fields are scalars or equally shaped arrays.
    """

    f1: object
    f2: object
    f3: object
    f4: object
    f5: object


def _merged_pairs(locs, weights, rel=1e-13):
    order = np.argsort(locs, kind="stable")
    out = []
    for x, p in zip(np.asarray(locs, dtype=float)[order], np.asarray(weights, dtype=float)[order]):
        if out and abs(x - out[-1][0]) <= rel * max(1.0, abs(x)):
            out[-1][1] += p
        else:
            out.append([float(x), float(p)])
    return tuple(map(tuple, out))


def shifted_singular_measure(op: OperatorModel, lam: complex) -> Measure1D:
    """Law of the singular values of x0 - lam."""
    lam = complex(lam)
    if isinstance(op, Zero):
        return Measure1D(atoms=((abs(lam), 1.0),))
    if isinstance(op, PlanarAtomic):
        return Measure1D(atoms=_merged_pairs([abs(z - lam) for z, _ in op.points],
                                             [p for _, p in op.points]))
    if isinstance(op, FiniteMatrix):
        s = np.linalg.svd(lam * np.eye(op.n) - op.matrix, compute_uv=False)
        return Measure1D(atoms=_merged_pairs(s, np.full(op.n, 1.0 / op.n)))
    if isinstance(op, SelfAdjoint):
        mu = op.measure
        a, b = lam.real, lam.imag
        if mu.pieces and b != 0.0:
            # integrals against this law bypass it; see _MeasureKernel
            raise DispatchToClosedForm("density pieces are only folded for real lam")
        atoms = _merged_pairs([math.hypot(x - a, b) for x, _ in mu.atoms],
                              [p for _, p in mu.atoms]) if mu.atoms else ()
        pieces = []
        for pc in mu.pieces:
            pieces += _fold_piece(pc, a)
        return Measure1D(atoms=atoms, pieces=_join_pieces(pieces))
    raise DispatchToClosedForm(f"{type(op).__name__} has no tabulated singular law")


def _fold_piece(pc, a):
    """Image of a density piece under u -> |u - a|."""
    x = pc.nodes
    n = max(pc.samples.size, MIN_PIECE_SAMPLES)
    out = []
    if pc.hi <= a:
        lo, hi = a - pc.hi, a - pc.lo
        s = np.linspace(lo, hi, n)
        out.append(DensityPiece(lo, hi, pc(a - s)))
    elif pc.lo >= a:
        lo, hi = pc.lo - a, pc.hi - a
        s = np.linspace(lo, hi, n)
        out.append(DensityPiece(lo, hi, pc(a + s)))
    else:
        hi = max(a - pc.lo, pc.hi - a)
        s = np.linspace(0.0, hi, 2 * n)
        dens = np.where(s <= pc.hi - a, np.interp(a + s, x, pc.samples), 0.0)
        dens = dens + np.where(s <= a - pc.lo, np.interp(a - s, x, pc.samples), 0.0)
        out.append(DensityPiece(0.0, hi, dens))
    return out


def _join_pieces(pieces):
    pieces = sorted(pieces, key=lambda p: p.lo)
    out = []
    for pc in pieces:
        if out and pc.lo < out[-1].hi:
            lo, hi = out[-1].lo, max(out[-1].hi, pc.hi)
            s = np.linspace(lo, hi, out[-1].samples.size + pc.samples.size)
            out[-1] = DensityPiece(lo, hi, out[-1](s) + pc(s))
        else:
            out.append(pc)
    return tuple(out)


# ----------------------------------------------------------------------------
# composite Gauss-Kronrod on density pieces
# ----------------------------------------------------------------------------

# 7-point Gauss / 15-point Kronrod pair on [-1, 1]
_XK = np.array([0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                0.207784955007898467600689403773245, 0.0])
_WK = np.array([0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                0.204432940075298892414161999234649, 0.209482141084727828012999174891714])
_WG = np.array([0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                0.381830050505118944950369775488975, 0.417959183673469387755102040816327])
GK_NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
GK_WEIGHTS = np.concatenate([_WK[:-1], _WK[::-1]])
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[1::2] = np.concatenate([_WG[:-1], _WG[::-1]])


def composite_gk(block, edges, count=1, abs_tol=QUAD_ABS_TOL, rel_tol=1e-12, max_rounds=60):
    """Integrals of ``count`` families of integrands over [edges[0], edges[-1]].

    ``block(idx, u)`` gets family indices (P,) and abscissae (P, 15) and
    returns values (rows, P, 15).  Every (family, segment) pair starts as one
    interval between consecutive edges with a 15-point Kronrod rule and is
    halved until its Kronrod/Gauss gap fits its share of the tolerance, so
    a sharp peak in one family does not refine the others.
    Returns an array (rows, count).
    """
    edges = np.asarray(edges, dtype=float)
    span = edges[-1] - edges[0]
    nseg = edges.size - 1
    idx = np.repeat(np.arange(count), nseg)
    lo, hi = np.tile(edges[:-1], count), np.tile(edges[1:], count)
    total = None
    for rnd in range(max_rounds + 1):
        half = 0.5 * (hi - lo)
        u = (lo + hi)[:, None] * 0.5 + half[:, None] * GK_NODES[None, :]
        vals = np.asarray(block(idx, u))
        kron = (vals * GK_WEIGHTS).sum(axis=2) * half
        if total is None:
            total = np.zeros((vals.shape[0], count), dtype=kron.dtype)
        if rnd == max_rounds or lo.size > MAX_GK_SEGMENTS:
            done = np.ones(lo.shape, dtype=bool)
        else:
            gauss = (vals * GAUSS_WEIGHTS).sum(axis=2) * half
            err = np.abs(kron - gauss).max(axis=0)
            scale = np.abs(kron).max(axis=0)
            budget = np.maximum(abs_tol, rel_tol * scale) * np.maximum((hi - lo) / span, 1e-3)
            done = ~np.isfinite(err) | (err <= budget) | (hi - lo <= 1e-14 * max(1.0, span))
        for r in range(total.shape[0]):
            np.add.at(total[r], idx[done], kron[r, done])
        if done.all():
            break
        keep = ~done
        lo, hi, idx = lo[keep], hi[keep], idx[keep]
        mid = 0.5 * (lo + hi)
        lo, hi, idx = np.concatenate([lo, mid]), np.concatenate([mid, hi]), np.concatenate([idx, idx])
    return total


# exact integrals of a piecewise linear density against the resolvent kernels
#
# On a segment put x = u - a and rho = A + s x; with c^2 = b^2 + w^2 every
# functional is a combination of I_k = int x^k / (x^2 + c^2) and
# J_k = int x^k / (x^2 + c^2)^2, k = 0, 1, 2.  Segments that stay far from
# the pole (c < 0.1 |x|) use the expansion in c^2 / x^2, which avoids the
# cancellation of the closed forms there.

_SERIES_TERMS = 9


def _far_series(x0, x1, c2):
    """I0, I1, J0, J1 from 1/(x^2+c^2) = sum_m (-c^2)^m x^(-2-2m); x0, x1 of equal sign."""
    r0, r1 = 1.0 / x0, 1.0 / x1
    # q[n] = int_{x0}^{x1} x^-n dx = (r0^(n-1) - r1^(n-1)) / (n-1), n >= 2
    top = 4 + 2 * _SERIES_TERMS
    q = [None, np.log(x1 / x0)]
    p0, p1 = np.ones_like(r0), np.ones_like(r1)
    for n in range(2, top):
        p0, p1 = p0 * r0, p1 * r1
        q.append((p0 - p1) / (n - 1))
    i0, i1, j0, j1 = (np.zeros_like(x0) for _ in range(4))
    coef = np.ones_like(c2)
    live = np.ones(c2.shape, dtype=bool)
    for m in range(_SERIES_TERMS):
        # c = 0 leaves only the leading term; skip the rest before powers overflow
        live = live & (coef != 0)
        i0[live] += coef[live] * q[2 + 2 * m][live]
        i1[live] += coef[live] * q[1 + 2 * m][live]
        j0[live] += (m + 1) * coef[live] * q[4 + 2 * m][live]
        j1[live] += (m + 1) * coef[live] * q[3 + 2 * m][live]
        coef = coef * (-c2)
    return i0, i1, j0, j1


def _segment_moments(pc, lam, w2):
    nodes = pc.nodes
    rho = pc.samples
    slope = np.diff(rho) / np.diff(nodes)
    a = lam.real[:, None]
    c2 = (lam.imag ** 2 + w2)[:, None]
    x0, x1 = nodes[None, :-1] - a, nodes[None, 1:] - a
    big_a = rho[None, :-1] - slope[None, :] * x0
    dx = x1 - x0
    near_x = np.minimum(np.abs(x0), np.abs(x1))
    far = (x0 * x1 > 0) & (c2 < 0.01 * near_x ** 2)

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        c = np.sqrt(c2)
        p0, p1 = x0 * x0 + c2, x1 * x1 + c2
        i0 = np.arctan2(dx * c, c2 + x0 * x1) / c
        i1 = 0.5 * np.log1p(dx * (x0 + x1) / p0)
        j0 = (i0 + dx * (c2 - x0 * x1) / (p0 * p1)) / (2 * c2)
        j1 = 0.5 * dx * (x0 + x1) / (p0 * p1)

    if far.any():
        c2b = np.broadcast_to(c2, x0.shape)
        with np.errstate(over="ignore", invalid="ignore"):
            i0[far], i1[far], j0[far], j1[far] = _far_series(x0[far], x1[far], c2b[far])
    i2 = dx - c2 * i0
    j2 = i0 - c2 * j0
    sl = slope[None, :]
    return {
        "I0": (big_a * i0 + sl * i1).sum(axis=1),  # int rho / den
        "I1": (big_a * i1 + sl * i2).sum(axis=1),  # int rho x / den
        "J0": (big_a * j0 + sl * j1).sum(axis=1),  # int rho / den^2
        "J1": (big_a * j1 + sl * j2).sum(axis=1),  # int rho x / den^2
    }


# lam - u = -x + i b
_FUNCTIONAL_FROM_MOMENTS = {
    "f1": lambda m, b: m["I0"],
    "f2": lambda m, b: -m["I1"] - 1j * b * m["I0"],
    "f3": lambda m, b: m["J0"],
    "f5": lambda m, b: -m["J1"] + 1j * b * m["J0"],
}


class _Kernel:
    """Evaluator prepared for a fixed batch of points lam (1-D array)."""

    def f1_f3(self, w):
        raise NotImplementedError

    def f1_at_zero(self):
        """f1 at w = 0 with +inf marking divergence."""
        raise NotImplementedError

    def full(self, w) -> ResolventFunctionals:
        raise NotImplementedError

    def logdet(self, w):
        raise NotImplementedError


class _MeasureKernel(_Kernel):
    """Normal operators given by a measure on the plane (atoms) or line (pieces)."""

    def __init__(self, lam, locs, weights, pieces=()):
        self.lam = lam
        self.d = lam[:, None] - np.asarray(locs, dtype=complex)[None, :]
        self.m = np.abs(self.d) ** 2
        self.p = np.asarray(weights, dtype=float)
        self.pieces = pieces

    def _piece_integrals(self, w, which):
        """Rows of integrals over density pieces, one row per requested functional."""
        lam = self.lam
        w2 = np.broadcast_to(np.asarray(w, dtype=float), lam.shape) ** 2
        out = np.zeros((len(which), lam.size), dtype=complex)
        for pc in self.pieces:
            step = max(1, 4_000_000 // pc.samples.size)
            for start in range(0, lam.size, step):
                sl = slice(start, start + step)
                m = _segment_moments(pc, lam[sl], w2[sl])
                for r, name in enumerate(which):
                    out[r, sl] += _FUNCTIONAL_FROM_MOMENTS[name](m, lam[sl].imag)
        return out

    def f1_f3(self, w):
        w2 = np.asarray(w, dtype=float)[:, None] ** 2 if np.ndim(w) else float(w) ** 2
        den = self.m + w2
        f1 = (self.p / den).sum(axis=1)
        f3 = (self.p / den ** 2).sum(axis=1)
        if self.pieces:
            extra = self._piece_integrals(w, ("f1", "f3")).real
            f1, f3 = f1 + extra[0], f3 + extra[1]
        return f1, f3

    def f1_at_zero(self):
        hit = ((self.m == 0) & (self.p > 0)[None, :]).any(axis=1)
        f1 = (self.p / np.where(self.m == 0, 1.0, self.m)).sum(axis=1)
        f1 = np.where(hit, np.inf, f1)
        if self.pieces:
            a, b = self.lam.real, self.lam.imag
            on = np.zeros(self.lam.shape, dtype=bool)
            for pc in self.pieces:
                on |= (b == 0) & (a >= pc.lo) & (a <= pc.hi)
            f1 = np.where(on, np.inf, f1)
            ok = ~on & np.isfinite(f1)
            if ok.any():
                sub = _MeasureKernel(self.lam[ok], [], [], self.pieces)
                f1[ok] += sub._piece_integrals(np.zeros(ok.sum()), ("f1",)).real[0]
        return f1

    def full(self, w):
        w = np.broadcast_to(np.asarray(w, dtype=float), self.lam.shape)
        den = self.m + w[:, None] ** 2
        f1 = (self.p / den).sum(axis=1)
        f2 = (self.p * np.conj(self.d) / den).sum(axis=1)
        f3 = (self.p / den ** 2).sum(axis=1)
        f5 = (self.p * self.d / den ** 2).sum(axis=1)
        if self.pieces:
            e = self._piece_integrals(w, ("f1", "f2", "f3", "f5"))
            f1, f2, f3, f5 = f1 + e[0].real, f2 + e[1], f3 + e[2].real, f5 + e[3]
        return ResolventFunctionals(f1, f2, f3, f3.copy(), f5)

    def logdet(self, w):
        w = np.broadcast_to(np.asarray(w, dtype=float), self.lam.shape)
        den = self.m + w[:, None] ** 2
        with np.errstate(divide="ignore"):
            val = (self.p * np.log(den)).sum(axis=1)
        if self.pieces:
            extra = np.zeros(self.lam.size)
            c2 = self.lam.imag ** 2 + w ** 2
            for pc in self.pieces:
                # a zero of the log argument goes in as a breakpoint
                zeros = self.lam.real[(c2 == 0) & (self.lam.real > pc.lo) & (self.lam.real < pc.hi)]
                edges = np.union1d(pc.nodes, zeros)

                def block(idx, u, pc=pc):
                    with np.errstate(divide="ignore"):
                        return (np.log((u - self.lam.real[idx][:, None]) ** 2 + c2[idx][:, None])
                                * pc(u))[None]

                extra += composite_gk(block, edges, count=self.lam.size)[0].real
            val = val + extra
        return val


class _MatrixKernel(_Kernel):
    def __init__(self, lam, a):
        n = a.shape[0]
        shifted = lam[:, None, None] * np.eye(n)[None] - a[None]
        u, s, vh = np.linalg.svd(shifted)
        self.n = n
        self.s = s
        self.vhu = vh @ u  # (V* U)

    def f1_f3(self, w):
        w2 = np.asarray(w, dtype=float)[:, None] ** 2 if np.ndim(w) else float(w) ** 2
        d = 1.0 / (self.s ** 2 + w2)
        return d.mean(axis=1), (d ** 2).mean(axis=1)

    def f1_at_zero(self):
        zero = (self.s <= 1e-14 * max(1.0, float(self.s.max(initial=0.0)))).any(axis=1)
        with np.errstate(divide="ignore"):
            f1 = (1.0 / self.s ** 2).mean(axis=1)
        return np.where(zero, np.inf, f1)

    def full(self, w):
        w = np.broadcast_to(np.asarray(w, dtype=float), self.s.shape[:1])
        d = 1.0 / (self.s ** 2 + w[:, None] ** 2)
        diag = np.diagonal(self.vhu, axis1=1, axis2=2)
        f1 = d.mean(axis=1)
        f3 = (d ** 2).mean(axis=1)
        f2 = (self.s * d * np.conj(diag)).sum(axis=1) / self.n
        f5 = (self.s * d ** 2 * diag).sum(axis=1) / self.n
        f4 = np.einsum("ki,kij,kj->k", d, np.abs(self.vhu) ** 2, d) / self.n
        return ResolventFunctionals(f1, f2, f3, f4, f5)

    def logdet(self, w):
        w = np.broadcast_to(np.asarray(w, dtype=float), self.s.shape[:1])
        with np.errstate(divide="ignore"):
            return np.log(self.s ** 2 + w[:, None] ** 2).mean(axis=1)


class _HaarKernel(_Kernel):
    """Haar unitary: spectral measure uniform on the unit circle.

    With q = |lam|^2, c = q + 1 + w^2 and S = sqrt(c^2 - 4q):
    f1 = 1/S, f3 = c/S^3, f2 = conj(lam) F(c) with F = (1 - 2/(c+S))/S,
    f5 = -lam F'(c) with F' = (2 - c)/S^3, log det = log((c+S)/2).
    """

    def __init__(self, lam):
        self.lam = lam
        self.q = np.abs(lam) ** 2

    def _cs(self, w):
        c = self.q + 1.0 + np.asarray(w, dtype=float) ** 2
        # c^2 - 4q = (q - 1 + w^2)^2 + 4 w^2, written to avoid cancellation
        w2 = np.asarray(w, dtype=float) ** 2
        s = np.sqrt((self.q - 1.0 + w2) ** 2 + 4.0 * w2)
        return c, s

    def f1_f3(self, w):
        c, s = self._cs(w)
        return 1.0 / s, c / s ** 3

    def f1_at_zero(self):
        with np.errstate(divide="ignore"):
            return np.where(self.q == 1.0, np.inf, 1.0 / np.abs(self.q - 1.0))

    def full(self, w):
        c, s = self._cs(w)
        f1, f3 = 1.0 / s, c / s ** 3
        big_f = (1.0 - 2.0 / (c + s)) / s
        f2 = np.conj(self.lam) * big_f
        f5 = -self.lam * (2.0 - c) / s ** 3
        return ResolventFunctionals(f1, f2, f3, f3.copy(), f5)

    def logdet(self, w):
        c, s = self._cs(w)
        with np.errstate(divide="ignore"):
            return np.log((c + s) / 2.0)

    def contour_check(self, w, nodes=64):
        """Trapezoid rule on the unit circle; an independent check of ``full``."""
        th = 2 * np.pi * np.arange(nodes) / nodes
        d = self.lam[:, None] - np.exp(1j * th)[None, :]
        den = np.abs(d) ** 2 + np.asarray(w, dtype=float).reshape(-1, 1) ** 2
        f1 = (1 / den).mean(axis=1)
        f3 = (1 / den ** 2).mean(axis=1)
        return ResolventFunctionals(f1, (np.conj(d) / den).mean(axis=1), f3, f3.copy(),
                                    (d / den ** 2).mean(axis=1))


class _DTKernel(_Kernel):
    """Quasi-nilpotent DT operator.

    For q = |lam|^2 and w^2 = m the traces are parametrized by x > 0 solving
    m = e^{-x} (1/x - q), with x < 1/q.  Then f1 = e^x - 1, f2 = conj(lam) x,
    tr A h^-1 = lam x, and derivatives in m follow by implicit differentiation.
    """

    def __init__(self, lam):
        self.lam = lam
        self.q = np.abs(lam) ** 2

    def solve_x(self, w):
        m = np.broadcast_to(np.asarray(w, dtype=float) ** 2, self.q.shape).astype(float)
        q = self.q
        x = np.empty_like(m)
        zero = m == 0.0
        with np.errstate(divide="ignore"):
            x[zero] = np.where(q[zero] > 0, 1.0 / np.where(q[zero] > 0, q[zero], 1.0), np.inf)
        pos = ~zero
        if pos.any():
            x[pos] = self._solve_x_positive(q[pos], m[pos])
        return x

    @staticmethod
    def _g(x, q, logm):
        # log m(x) - log m, decreasing in x on (0, 1/q)
        with np.errstate(divide="ignore", invalid="ignore"):
            return -x + np.log1p(-q * x) - np.log(x) - logm

    def _solve_x_positive(self, q, m):
        logm = np.log(m)
        lo = np.zeros_like(q)
        with np.errstate(divide="ignore"):
            hi = np.where(q > 0, 1.0 / np.where(q > 0, q, 1.0), 1.0)
        free = q == 0
        while True:
            bad = free & (self._g(hi, q, logm) > 0)
            if not bad.any():
                break
            hi = np.where(bad, 2 * hi, hi)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            up = self._g(mid, q, logm) > 0
            lo = np.where(up, mid, lo)
            hi = np.where(up, hi, mid)
            if np.all(hi - lo <= 4e-16 * hi):
                break
        x = 0.5 * (lo + hi)
        # one Newton step on g for the last bits
        gp = -1.0 - q / (1.0 - q * x) - 1.0 / x
        xn = x - self._g(x, q, logm) / gp
        return np.where((xn > lo) & (xn < hi), xn, x)

    def _pieces(self, w):
        x = self.solve_x(w)
        q = self.q
        with np.errstate(divide="ignore", invalid="ignore"):
            e = 1.0 / x - q + 1.0 / x ** 2  # -e^x dm/dx
        return x, e

    def f1_f3(self, w):
        x, e = self._pieces(w)
        return np.expm1(x), np.exp(2 * x) / e

    def f1_at_zero(self):
        with np.errstate(over="ignore"):
            return self.f1_f3(np.zeros_like(self.q))[0]

    def full(self, w):
        w = np.broadcast_to(np.asarray(w, dtype=float), self.q.shape)
        x, e = self._pieces(w)
        f1 = np.expm1(x)
        f3 = np.exp(2 * x) / e
        f2 = np.conj(self.lam) * x
        f5 = self.lam * np.exp(x) / e
        with np.errstate(divide="ignore", invalid="ignore"):
            f4 = np.where(w > 0, (x - self.q / e) / w ** 2, np.inf)
        return ResolventFunctionals(f1, f2, f3, f4, f5)

    def logdet(self, w):
        w = np.broadcast_to(np.asarray(w, dtype=float), self.q.shape)
        return np.array([self._logdet_one(q, wi) for q, wi in zip(self.q, w)])

    def _logdet_one(self, q, w):
        """log det(|T - lam|^2 + w^2) from d/dm log det = f1 and log det ~ log m."""
        if q == 0.0 and w == 0.0:
            raise NegativeInfinity("DT operator at lam = 0 has log det = -inf")
        x_end = self.__class__(np.array([math.sqrt(q)]))._pieces(np.array([w]))[0][0]

        def m_of(x):
            return math.exp(-x) * (1.0 / x - q)

        def dm_weight(x):  # |dm/dx|
            return math.exp(-x) * (1.0 / x - q + 1.0 / x ** 2)

        # split at x_c: tail (x < x_c) integrates f1 - 1/m, head integrates f1
        x_c = min(0.5, 0.5 * x_end)
        tail = integrate.quad(lambda x: (math.expm1(x) - 1.0 / m_of(x)) * dm_weight(x),
                              0.0, x_c, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
        head = integrate.quad(lambda x: math.expm1(x) * dm_weight(x),
                              x_c, x_end, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
        return math.log(m_of(x_c)) - tail - head


def kernel_for(op: OperatorModel, lam) -> _Kernel:
    """Prepare an evaluator for a 1-D array of points."""
    lam = np.atleast_1d(np.asarray(lam, dtype=complex)).ravel()
    if isinstance(op, Zero):
        return _MeasureKernel(lam, [0.0], [1.0])
    if isinstance(op, PlanarAtomic):
        return _MeasureKernel(lam, [z for z, _ in op.points], [p for _, p in op.points])
    if isinstance(op, SelfAdjoint):
        mu = op.measure
        return _MeasureKernel(lam, mu.atom_locations, mu.atom_weights, mu.pieces)
    if isinstance(op, FiniteMatrix):
        return _MatrixKernel(lam, op.matrix)
    if isinstance(op, HaarUnitary):
        return _HaarKernel(lam)
    if isinstance(op, QuasiNilpotentDT):
        return _DTKernel(lam)
    raise TypeError(f"unsupported operator {op!r}")


def _scalarize(rf: ResolventFunctionals) -> ResolventFunctionals:
    return ResolventFunctionals(float(rf.f1[0]), complex(rf.f2[0]), float(rf.f3[0]),
                                float(rf.f4[0]), complex(rf.f5[0]))


def resolvent_functionals(op: OperatorModel, lam: complex, w: float) -> ResolventFunctionals:
    """The five traces at one point."""
    if w < 0:
        raise ValueError("w must be >= 0")
    kern = kernel_for(op, lam)
    if w == 0 and not np.isfinite(kern.f1_at_zero()[0]):
        raise DivergentIntegral("zero is an atom of the singular-value law")
    return _scalarize(kern.full(np.array([float(w)])))


def inverse_square_moment(op: OperatorModel, lam: complex) -> float:
    """f1 at w = 0, i.e. int u^-2 of the singular law (math.inf if divergent)."""
    return float(kernel_for(op, lam).f1_at_zero()[0])


def log_fk_det_shifted(op: OperatorModel, lam: complex, w: float) -> float:
    """log det((x0 - lam)*(x0 - lam) + w^2) in the normalized trace sense."""
    val = float(kernel_for(op, lam).logdet(np.array([float(w)]))[0])
    if val == -math.inf:
        raise NegativeInfinity("zero is an atom of the singular-value law")
    return val
