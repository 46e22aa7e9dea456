import math

import numpy as np
import pytest

from brownlab.brown_circular import density_grid
from brownlab.errors import ConfigError
from brownlab.randmat_lab import (EnsembleSpec, binned_tv, circular_law_cdf, eigenvalues,
                                  ensemble_eigenvalues, esd_compare, radial_ks, sample,
                                  sample_from_grid, sample_sum, three_atom_diagonal)
from brownlab.special_operators import haar_cdf_clipped
from brownlab.spectral_core import Zero


@pytest.fixture(scope="module")
def disk_grid():
    return density_grid(Zero(), 1.0, (-1.2, 1.2, -1.2, 1.2), (120, 120))


def test_ginibre_frobenius():
    a = sample(EnsembleSpec(256, "ginibre", seed=3))
    assert np.trace(a @ a.conj().T).real / 256 == pytest.approx(1, abs=0.15)


def test_elliptic_hermitian_at_gamma_t():
    a = sample(EnsembleSpec(64, "elliptic", seed=1, t=1.0, gamma=1.0))
    assert np.linalg.norm(a - a.conj().T) / np.linalg.norm(a) < 1e-12


def test_elliptic_second_moments():
    n = 400
    a = sample(EnsembleSpec(n, "elliptic", seed=2, t=1.0, gamma=0.4j))
    # tr(A A*)/n -> t and tr(A^2)/n -> gamma
    assert np.trace(a @ a.conj().T).real / n == pytest.approx(1.0, abs=0.05)
    assert np.trace(a @ a) / n == pytest.approx(0.4j, abs=0.05)


def test_haar_unitary():
    u = sample(EnsembleSpec(64, "haar_unitary", seed=5))
    assert np.linalg.norm(u.conj().T @ u - np.eye(64)) < 1e-10


def test_dt_upper_shape():
    a = sample(EnsembleSpec(300, "dt_upper", seed=5))
    assert np.all(np.tril(a) == 0)
    assert np.sum(np.abs(a) ** 2) / 300 == pytest.approx(0.5, abs=0.05)


def test_spec_validation():
    with pytest.raises(ConfigError):
        EnsembleSpec(1, "ginibre")
    with pytest.raises(ConfigError):
        EnsembleSpec(8, "elliptic", t=1.0, gamma=1.5)
    with pytest.raises(ConfigError):
        EnsembleSpec(8, "wishart")
    with pytest.raises(ConfigError):
        EnsembleSpec(3, "deterministic", matrix=np.eye(2))
    with pytest.raises(ConfigError):
        eigenvalues(np.zeros((3, 4)))


def test_reproducible():
    spec = EnsembleSpec(50, "elliptic", seed=11, t=0.7, gamma=0.2 + 0.1j)
    assert np.array_equal(sample(spec), sample(spec))
    assert not np.array_equal(sample(spec, stream=0), sample(spec, stream=1))
    specs = [EnsembleSpec(40, "deterministic", matrix=np.eye(40)), EnsembleSpec(40, "ginibre")]
    assert np.array_equal(sample_sum(specs, seed=9), sample_sum(specs, seed=9))


def test_eigen_examples():
    assert np.allclose(eigenvalues(np.eye(5)), 1, atol=1e-12)
    ev = eigenvalues(np.diag([1, 2j, -3]))
    assert sorted(ev, key=lambda z: (z.real, z.imag)) == pytest.approx([-3, 2j, 1], abs=1e-12)
    comp = np.array([[0, 0, 1], [1, 0, 0], [0, 1, 0]], dtype=complex)
    roots = np.exp(2j * math.pi * np.arange(3) / 3)
    ev = eigenvalues(comp)
    assert max(min(abs(e - roots)) for e in ev) < 1e-10
    assert max(min(abs(r - ev)) for r in roots) < 1e-10


def test_count_and_trace():
    a = sample_sum([EnsembleSpec(200, "deterministic", matrix=three_atom_diagonal(200)),
                    EnsembleSpec(200, "ginibre", t=0.5)], seed=4)
    ev = eigenvalues(a)
    assert ev.size == 200
    assert abs(ev.sum() - np.trace(a)) <= 1e-6 * 200 * np.linalg.norm(a, 2)


def test_three_atom_counts():
    d = np.diag(three_atom_diagonal(510)).real
    assert [np.sum(d == x) for x in (-2.0, -0.8, 1.0)] == [204, 51, 255]


def test_synthetic_resampling_tv(disk_grid):
    pts = sample_from_grid(disk_grid, 100_000, seed=0)
    assert binned_tv(pts, disk_grid) < 0.05


def test_metrics_in_unit_interval(disk_grid):
    pts = 3.0 + sample_from_grid(disk_grid, 500, seed=1)
    rep = esd_compare(pts, disk_grid, rotation_invariant=True)
    assert 0 <= rep.binned_tv <= 1 and 0 <= rep.radial_ks <= 1
    assert rep.binned_tv > 0.9


def test_esd_compare_requires_enough_points(disk_grid):
    with pytest.raises(ConfigError):
        esd_compare(np.zeros(50, complex), disk_grid)


def test_ginibre_circular_law():
    ev = eigenvalues(sample(EnsembleSpec(512, "ginibre", seed=0)))
    assert radial_ks(ev, circular_law_cdf(1.0)) < 0.06


def test_haar_plus_ginibre():
    specs = [EnsembleSpec(512, "haar_unitary"), EnsembleSpec(512, "ginibre", t=0.5)]
    ev = ensemble_eigenvalues(specs, [0])[0]
    rep = esd_compare(ev, lambda r: haar_cdf_clipped(r, 0.5))
    assert rep.radial_ks < 0.08


def test_ks_trend():
    means = []
    for n in (128, 256, 512):
        ks = [radial_ks(ev, circular_law_cdf(1.0))
              for ev in ensemble_eigenvalues([EnsembleSpec(n, "ginibre")], range(5), workers=2)]
        means.append(np.mean(ks))
    assert means[2] < means[0]
    assert means[1] < 1.2 * means[0] and means[2] < 1.2 * means[1]


def test_workers_do_not_change_results():
    specs = [EnsembleSpec(64, "ginibre")]
    a = ensemble_eigenvalues(specs, [1, 2, 3], workers=1)
    b = ensemble_eigenvalues(specs, [1, 2, 3], workers=3)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_report_io(tmp_path, disk_grid):
    ev = sample_from_grid(disk_grid, 200, seed=2)
    rep = esd_compare(ev, circular_law_cdf(1.0))
    doc = rep.to_json()
    assert doc["n"] == 200 and doc["radial_ks"] is not None
    rep.to_csv(tmp_path / "e.csv")
    rows = (tmp_path / "e.csv").read_text().splitlines()
    assert rows[0] == "re,im" and len(rows) == 201
    back = np.array([complex(float(x), float(y)) for x, y in (r.split(",") for r in rows[1:])])
    assert np.array_equal(back, ev)
