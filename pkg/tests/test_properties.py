"""Randomized invariants."""

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from brownlab.brown_circular import density_circular_many
from brownlab.randmat_lab import binned_tv, circular_law_cdf, radial_ks
from brownlab.selfadjoint_case import delta_sa, psi_t_prime, v_t
from brownlab.special_operators import RDiagonalProfile, brown_cdf_rdiag, phi_rdiag
from brownlab.spectral_core import (FiniteMatrix, HaarUnitary, Measure1D, PlanarAtomic, SelfAdjoint,
                                    resolvent_functionals, shifted_singular_measure)
from brownlab.subordination import solve_w, solve_w0

SETTINGS = settings(max_examples=40, deadline=None)

coord = st.floats(-2.5, 2.5, allow_nan=False)
point = st.builds(complex, coord, coord)


@st.composite
def planar(draw, k_max=4):
    k = draw(st.integers(1, k_max))
    pts = draw(st.lists(point, min_size=k, max_size=k, unique=True))
    raw = draw(st.lists(st.integers(1, 5), min_size=k, max_size=k))
    total = sum(raw)
    return PlanarAtomic(tuple((z, r / total) for z, r in zip(pts, raw))), pts, raw


@st.composite
def real_atoms(draw, k_max=4):
    k = draw(st.integers(1, k_max))
    xs = draw(st.lists(st.floats(-2, 2, allow_nan=False), min_size=k, max_size=k, unique=True))
    raw = draw(st.lists(st.integers(1, 5), min_size=k, max_size=k))
    total = sum(raw)
    return Measure1D.from_atoms([(x, r / total) for x, r in zip(xs, raw)])


@SETTINGS
@given(planar(), point)
def test_singular_measure_has_unit_mass(model, lam):
    assert shifted_singular_measure(model[0], lam).total_mass() == pytest.approx(1, abs=1e-12)


@SETTINGS
@given(planar(), point, st.floats(0.05, 3))
def test_normal_models_have_equal_f3_f4(model, lam, w):
    rf = resolvent_functionals(model[0], lam, w)
    assert rf.f3 == pytest.approx(rf.f4, rel=1e-12, abs=1e-12)


@SETTINGS
@given(planar(), point, st.floats(0.05, 3))
def test_diagonal_matrix_matches_planar(model, lam, w):
    op, pts, raw = model
    diag = np.concatenate([np.full(r, z) for z, r in zip(pts, raw)])
    a = resolvent_functionals(op, lam, w)
    b = resolvent_functionals(FiniteMatrix(np.diag(diag)), lam, w)
    for name in ("f1", "f2", "f3", "f4", "f5"):
        assert getattr(b, name) == pytest.approx(getattr(a, name), rel=1e-10, abs=1e-10)


@SETTINGS
@given(real_atoms(), point, st.floats(0.01, 2), st.floats(1.01, 3))
def test_f1_strictly_decreasing(mu, lam, w, factor):
    op = SelfAdjoint(mu)
    assert resolvent_functionals(op, lam, w * factor).f1 < resolvent_functionals(op, lam, w).f1


@SETTINGS
@given(real_atoms(), point, st.floats(0.2, 2), st.floats(1e-3, 0.5))
def test_solution_brackets_t(mu, lam, t, eps):
    op = SelfAdjoint(mu)
    w = solve_w(op, lam, t, eps).w
    assert w > eps

    def k(s):
        return (s - eps) / (s * resolvent_functionals(op, lam, s).f1)

    d = 1e-6 * max(1.0, w)
    assume(w - d > eps)
    assert k(w - d) < t < k(w + d)


@SETTINGS
@given(planar(), point, st.floats(0.2, 2), st.floats(1e-4, 0.3), st.floats(1.5, 10))
def test_w_ordered_in_eps(model, lam, t, eps, ratio):
    op = model[0]
    assert solve_w(op, lam, t, eps).w < solve_w(op, lam, t, eps * ratio).w


@SETTINGS
@given(real_atoms(), st.floats(0, 2 * math.pi), st.floats(1e-3, 0.1))
def test_w_small_far_from_support(mu, angle, eps):
    lam = 30 * complex(math.cos(angle), math.sin(angle))
    assert solve_w(SelfAdjoint(mu), lam, 1.0, eps).w <= 2 * eps


@SETTINGS
@given(real_atoms(), point, st.floats(0.3, 2))
def test_density_positive_inside_domain(mu, lam, t):
    op = SelfAdjoint(mu)
    sol = solve_w0(op, lam, t)
    assume(sol.in_xi_t and sol.w > 1e-3)
    assert density_circular_many(op, [lam], t)[0] > 0


@SETTINGS
@given(real_atoms(), st.floats(-3, 3), st.floats(0.3, 2))
def test_psi_prime_bounds(mu, a, t):
    assume(v_t(mu, t, a) > 1e-3)
    d = psi_t_prime(mu, t, a)
    # a single atom gives psi = a + a, so the upper bound is attained
    assert 0 < d <= 2 + 1e-12


@SETTINGS
@given(real_atoms(), st.floats(-4, 4), st.floats(1e-3, 1), st.floats(0.3, 2), st.floats(-0.9, 0.9))
def test_shear_increasing(mu, a, step, t, frac):
    gamma = frac * t
    assert delta_sa(mu, t, gamma, a + step) > delta_sa(mu, t, gamma, a)


@SETTINGS
@given(st.floats(0.1, 2), st.floats(0.01, 1), st.floats(0.01, 1))
def test_rdiag_cdf_monotone(t, r, dr):
    prof = RDiagonalProfile.circular_deformation(HaarUnitary(), t)
    a = brown_cdf_rdiag(prof, r * prof.lambda2)
    b = brown_cdf_rdiag(prof, min(r + dr, 1.2) * prof.lambda2)
    assert 0 <= a <= b <= 1


@SETTINGS
@given(st.floats(0.1, 2), st.floats(0.05, 1), st.floats(0.01, 0.5), st.floats(0, 1))
def test_rdiag_axes_monotone(t, r, dr, frac):
    prof = RDiagonalProfile.circular(t)
    g = frac * t
    lo = phi_rdiag(prof, r * prof.lambda2, g)
    hi = phi_rdiag(prof, (r + dr) * prof.lambda2, g)
    assert hi[0] >= lo[0] - 1e-12 and hi[1] >= lo[1] - 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32), st.integers(100, 400), st.floats(0.1, 5))
def test_metrics_in_unit_interval(seed, n, scale):
    rng = np.random.default_rng(seed)
    z = scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    cdf = circular_law_cdf(1.0)
    assert 0 <= radial_ks(z, cdf) <= 1
    assert 0 <= binned_tv(z, cdf) <= 1
