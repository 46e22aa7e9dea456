import math

import numpy as np
import pytest

from brownlab.errors import ConfigError
from brownlab.spectral_core import (FiniteMatrix, HaarUnitary, Measure1D, SelfAdjoint, Zero, kernel_for,
                                    shifted_singular_measure)
from brownlab.subordination import (in_xi_t, lambda1_squared, scalar_omega1, solve_w, solve_w0,
                                    solve_w0_many, solve_w_many, symmetrize)
from oracles import THREE_ATOMS, atoms_as_matrix, dense_w0

JORDAN = FiniteMatrix(np.array([[0, 1], [0, 0]], dtype=complex))
PM1 = SelfAdjoint(Measure1D.from_atoms([(-1, 0.5), (1, 0.5)]))
THREE = SelfAdjoint(Measure1D.from_atoms(THREE_ATOMS))


def test_lambda1_squared():
    assert lambda1_squared(Zero(), 0.5) == pytest.approx(0.25, abs=1e-15)
    assert lambda1_squared(JORDAN, 0) == 0.0
    assert lambda1_squared(PM1, 0) == pytest.approx(1.0, abs=1e-15)


def test_xi_membership():
    assert in_xi_t(Zero(), 0.5, 1)
    assert not in_xi_t(Zero(), 1.5, 1)
    assert in_xi_t(HaarUnitary(), 1, 0.5)
    assert not in_xi_t(HaarUnitary(), 0.5, 0.5)
    assert in_xi_t(JORDAN, 0, 1e-6)


def test_solve_w_point_mass_quadratic():
    r = solve_w(Zero(), 0, 1, 0.5)
    assert r.w == pytest.approx((0.5 + math.sqrt(4.25)) / 2, abs=1e-13)
    assert abs(r.residual) <= 1e-12


def test_solve_w_small_eps_tends_to_w0():
    assert solve_w(Zero(), 0.6, 1, 1e-9).w == pytest.approx(0.8, abs=1e-8)


def test_solve_w_far_away():
    for lam in (1e2, 1e4, 1e6j):
        r = solve_w(THREE, lam, 1, 1)
        assert 1 < r.w < 2


def test_solve_w0_examples():
    assert solve_w0(Zero(), 0.6, 1).w == pytest.approx(0.8, abs=1e-14)
    assert solve_w0(JORDAN, 0, 1).w == pytest.approx(2 ** -0.25, abs=1e-14)
    assert solve_w0(HaarUnitary(), 1, 0.5).w == pytest.approx(math.sqrt(math.sqrt(4.25) - 2), abs=1e-13)
    out = solve_w0(Zero(), 1.5, 1)
    assert out.w == 0 and not out.in_xi_t


def test_solve_w0_matches_dense_root():
    rng = np.random.default_rng(2)
    a = (rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))) / 2
    op = FiniteMatrix(a)
    for lam in (0.2 + 0.1j, -0.4j, 0.7):
        assert solve_w0(op, lam, 1.0).w == pytest.approx(dense_w0(a, lam, 1.0), abs=1e-12)


def test_batched_solver_matches_scalar():
    pts = np.array([0.1 + 0.3j, -1.5 + 0.2j, 0.9 - 0.8j, 4.0])
    batch = solve_w0_many(THREE, pts, 1.0)
    for p, w in zip(pts, batch.w):
        assert solve_w0(THREE, p, 1.0).w == w


def test_delta_oracle_three_atoms():
    """Im omega_1(i eps) of the symmetrized singular law equals w(eps)."""
    for lam, t, eps in [(0.2 + 0.4j, 1.0, 0.1), (-1.7 + 0.1j, 0.5, 0.01), (2.5, 2.0, 0.3)]:
        mu = symmetrize(shifted_singular_measure(THREE, lam))
        om = scalar_omega1(mu, t, 1j * eps)
        assert abs(om.real) < 1e-12
        assert om.imag == pytest.approx(solve_w(THREE, lam, t, eps).w, abs=1e-8)


def test_scalar_omega_examples():
    assert scalar_omega1(Measure1D.from_atoms([(0, 1)]), 1, 1j) == pytest.approx(1j * (1 + math.sqrt(5)) / 2, abs=1e-12)
    mu = symmetrize(shifted_singular_measure(Zero(), 0.6))
    assert scalar_omega1(mu, 1, 0.01j).imag == pytest.approx(solve_w(Zero(), 0.6, 1, 0.01).w, abs=1e-8)
    with pytest.raises(ValueError):
        scalar_omega1(Measure1D.from_atoms([(1, 1)]), 1, 1j)


def test_scalar_omega_with_density():
    mu = symmetrize(Measure1D.from_density(lambda x: np.ones_like(x), 0, 1))
    om = scalar_omega1(mu, 0.5, 0.2j)
    assert abs(om.real) < 1e-12 and om.imag > 0.2


def test_symmetrize_examples():
    assert symmetrize(Measure1D.from_atoms([(1, 1)])).atoms == ((-1.0, 0.5), (1.0, 0.5))
    assert symmetrize(Measure1D.from_atoms([(0, 0.5), (1, 0.5)])).atoms == ((-1.0, 0.25), (0.0, 0.5), (1.0, 0.25))
    sym = symmetrize(Measure1D.from_density(lambda x: np.ones_like(x), 0, 1))
    assert sym.pieces[0].lo == -1 and sym.pieces[0].hi == 1
    assert np.allclose(sym.pieces[0].samples, 0.5)
    assert sym.total_mass() == pytest.approx(1, abs=1e-12)


def test_eps_validation():
    with pytest.raises(ValueError):
        solve_w(Zero(), 0, 1, 0.0)
    with pytest.raises(ValueError):
        in_xi_t(Zero(), 0, 0)


def test_diagonal_matrix_domain_matches_measure():
    a = FiniteMatrix(atoms_as_matrix(THREE_ATOMS, 10))
    pts = np.array([0.1 + 0.3j, -1.5 + 0.2j, 0.9 - 0.8j, 4.0])
    assert np.allclose(solve_w0_many(a, pts, 1).w, solve_w0_many(THREE, pts, 1).w, atol=1e-12)
