import math

import numpy as np
import pytest

from brownlab.brown_circular import density_grid, log_fk_det_circular
from brownlab.errors import ConfigError, EnvelopeFailure, SingularPushforward
from brownlab.pushforward import (EllipticParams, jacobian_phi, log_fk_det_elliptic, p_functional, phi,
                                  phi_eps, phi_many, pushforward_density, pushforward_pointcloud)
from brownlab.spectral_core import HaarUnitary, Measure1D, QuasiNilpotentDT, SelfAdjoint, Zero
from oracles import THREE_ATOMS, ks_against, semicircle_cdf

PM1 = SelfAdjoint(Measure1D.from_atoms([(-1, 0.5), (1, 0.5)]))
THREE = SelfAdjoint(Measure1D.from_atoms(THREE_ATOMS))


def test_params_validation():
    with pytest.raises(ConfigError):
        EllipticParams(0.0, 0)
    with pytest.raises(ConfigError):
        EllipticParams(1.0, 1.1)
    EllipticParams(1.0, 1.0)


def test_phi_examples():
    assert phi(Zero(), 0.5, EllipticParams(1, 1)) == pytest.approx(1.0, abs=1e-13)
    assert phi(THREE, 0.3 + 0.4j, EllipticParams(1, 0)) == 0.3 + 0.4j
    lam, g = 0.4 - 0.3j, 0.3 + 0.2j
    want = lam + g * lam.conjugate() * math.log(2)
    assert phi(QuasiNilpotentDT(), lam, EllipticParams(1, g)) == pytest.approx(want, abs=1e-12)


def test_phi_eps_examples():
    assert abs(phi_eps(Zero(), 0, EllipticParams(1, 0.7), 0.3)) < 1e-15
    assert phi_eps(Zero(), 0.5, EllipticParams(1, 1), 1e-6) == pytest.approx(1.0, abs=1e-5)
    far = 1e3 + 2e3j
    assert abs(phi_eps(THREE, far, EllipticParams(1, 0.5), 0.1) - far) < 1e-2


def test_jacobian_examples():
    jr = jacobian_phi(THREE, 0.5 + 0.1j, EllipticParams(1, 0))
    assert np.array_equal(jr.matrix, np.eye(2)) and jr.det == 1.0
    jr = jacobian_phi(Zero(), 0.2 + 0.3j, EllipticParams(1, 0.4))
    assert np.allclose(jr.matrix, [[1.4, 0], [0, 0.6]], atol=1e-8)
    assert jr.det == pytest.approx(1 - 0.16, abs=1e-8)
    jr = jacobian_phi(PM1, 0.1 + 0.2j, EllipticParams(2, 1))
    assert jr.det == pytest.approx(jr.fd_det, abs=1e-6)


def test_elliptic_log_det_examples():
    z, ld = log_fk_det_elliptic(THREE, 0.4 + 0.2j, EllipticParams(1, 0))
    assert z == 0.4 + 0.2j and ld == pytest.approx(log_fk_det_circular(THREE, 0.4 + 0.2j, 1), abs=1e-15)
    z, ld = log_fk_det_elliptic(Zero(), 0, EllipticParams(1, 0.6j))
    assert abs(z) < 1e-15 and ld == pytest.approx(-0.5, abs=1e-14)


def test_dt_p_functional():
    assert p_functional(QuasiNilpotentDT(), 0.5, 1) == pytest.approx(0.5 * math.log(2), abs=1e-12)


def test_singular_log_det_refused():
    with pytest.raises(SingularPushforward):
        log_fk_det_elliptic(Zero(), 0.3, EllipticParams(1, 1))


def test_derivative_transport():
    """p at w0 equals 2 d/dlam log det(x0 + c_t - lam)."""
    params = EllipticParams(1, 0.3 + 0.2j)
    for lam in (0.2 + 0.3j, -1.6 + 0.2j):
        h = 1e-5
        dx = (log_fk_det_circular(THREE, lam + h, 1) - log_fk_det_circular(THREE, lam - h, 1)) / (2 * h)
        dy = (log_fk_det_circular(THREE, lam + 1j * h, 1) - log_fk_det_circular(THREE, lam - 1j * h, 1)) / (2 * h)
        assert p_functional(THREE, lam, params.t) == pytest.approx(dx - 1j * dy, abs=1e-6)


def test_elliptic_log_det_gradient_matches_p():
    """Lemma-style chain rule: d/dz log det(x0 + g - z) pulled back through Phi."""
    params = EllipticParams(1, 0.25 + 0.25j)
    lam = 0.9 + 0.3j
    h = 1e-5
    z0, _ = log_fk_det_elliptic(THREE, lam, params)
    vals = {}
    for d in (h, -h, 1j * h, -1j * h):
        vals[d] = log_fk_det_elliptic(THREE, lam + d, params)
    jr = jacobian_phi(THREE, lam, params)
    gl = np.array([(vals[h][1] - vals[-h][1]) / (2 * h), (vals[1j * h][1] - vals[-1j * h][1]) / (2 * h)])
    gz = np.linalg.solve(jr.matrix.T, gl)  # gradient in z coordinates
    p_z = gz[0] - 1j * gz[1]
    assert p_z == pytest.approx(p_functional(THREE, lam, 1), abs=1e-6)


def test_zero_ellipse_pushforward():
    g = density_grid(Zero(), 1, (-1.05, 1.05, -1.05, 1.05), (211, 211))
    f = pushforward_density(Zero(), EllipticParams(1, 0.5), g)
    assert not f.flagged.any()
    assert np.allclose(f.dst_density, 1 / (0.75 * math.pi), atol=1e-6)
    assert f.transported_mass == pytest.approx(f.source_mass, abs=1e-3)
    x, y = f.z.real, f.z.imag
    assert np.all((x / 1.5) ** 2 + (y / 0.5) ** 2 <= 1 + 1e-9)


def test_gamma_zero_pushforward_is_identity():
    g = density_grid(THREE, 1, (-4, 3, -1.5, 1.5), (30, 20))
    f = pushforward_density(THREE, EllipticParams(1, 0), g)
    assert np.array_equal(f.z, f.lam) and np.all(f.jac_det == 1)
    assert np.array_equal(f.dst_density, f.src_density)


def test_haar_transport_is_regular():
    # circles go to ellipses with distinct axes even at gamma = t, so no cell is flagged
    g = density_grid(HaarUnitary(), 0.5, (-1.3, 1.3, -1.3, 1.3), (60, 60))
    for gamma in (0.3, 0.5):
        f = pushforward_density(HaarUnitary(), EllipticParams(0.5, gamma), g)
        assert not f.flagged.any() and np.all(f.jac_det > 0)
    assert f.transported_mass == pytest.approx(f.source_mass, rel=1e-12)


def test_point_cloud_semicircle():
    g = density_grid(Zero(), 1, (-1.02, 1.02, -1.02, 1.02), (101, 101))
    z = pushforward_pointcloud(Zero(), EllipticParams(1, 1), 20000, 3, g)
    assert np.max(np.abs(z.imag)) < 1e-12
    assert ks_against(z.real, semicircle_cdf) < 0.02


def test_point_cloud_reproducible():
    g = density_grid(THREE, 1, (-4, 3, -1.5, 1.5), (60, 40))
    a = pushforward_pointcloud(THREE, EllipticParams(1, 0.25 + 0.25j), 500, 9, g)
    b = pushforward_pointcloud(THREE, EllipticParams(1, 0.25 + 0.25j), 500, 9, g)
    assert np.array_equal(a, b)


def test_point_cloud_envelope_failure():
    g = density_grid(Zero(), 1e-4, (-50, 50, -50, 50), (5, 5))
    with pytest.raises(EnvelopeFailure):
        pushforward_pointcloud(Zero(), EllipticParams(1e-4, 0), 10, 0, g, batch=2000)
    empty = density_grid(Zero(), 1e-4, (-50, 50, -50, 50), (4, 4))
    with pytest.raises(EnvelopeFailure):
        pushforward_pointcloud(Zero(), EllipticParams(1e-4, 0), 10, 0, empty)


def test_phi_injective_where_regular():
    params = EllipticParams(1, 0.25 + 0.25j)
    g = density_grid(THREE, 1, (-4, 3, -1.5, 1.5), (40, 30))
    z = phi_many(THREE, g.points[g.mask], params)
    dist = np.abs(z[:, None] - z[None, :]) + np.eye(z.size)
    assert dist.min() > 1e-4


def test_uniform_convergence_of_regularized_map():
    params = EllipticParams(1, 0.25 + 0.25j)
    pts = (np.linspace(-3.5, 2.5, 13)[:, None] + 1j * np.linspace(-1.2, 1.2, 7)[None, :]).ravel()
    base = phi_many(THREE, pts, params)
    devs = [np.max(np.abs(phi_many(THREE, pts, params, eps=e) - base)) for e in (1e-2, 1e-3, 1e-4)]
    assert devs[0] > devs[1] > devs[2]
