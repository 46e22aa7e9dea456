"""
Matrices versus Brown measures
==============================

Eigenvalues of M_n + X_n, X_n Ginibre with variance t/n, spread like the
Brown measure of x0 + c_t.  This script pools a few samples and scores them
against the computed densities.
"""

# %%
import numpy as np

from brownlab import Measure1D, SelfAdjoint, density_grid
from brownlab.randmat_lab import (EnsembleSpec, binned_tv, circular_law_cdf, ensemble_eigenvalues,
                                  radial_ks, three_atom_diagonal)
from brownlab.special_operators import dt_disk_radius

# %%
# Plain Ginibre: the KS distance to the circular law shrinks with n.
for n in (128, 256, 512):
    ks = [radial_ks(ev, circular_law_cdf()) for ev in ensemble_eigenvalues([EnsembleSpec(n, "ginibre")], range(3))]
    print(f"n={n}: mean radial KS {np.mean(ks):.4f}")

# %%
# Three atoms on the diagonal plus Ginibre noise, pooled over ten draws.
atoms = [(-2.0, 0.4), (-0.8, 0.1), (1.0, 0.5)]
specs = [EnsembleSpec(510, "deterministic", matrix=three_atom_diagonal(510, atoms)),
         EnsembleSpec(510, "ginibre")]
eigs = np.concatenate(ensemble_eigenvalues(specs, range(10), workers=4))
grid = density_grid(SelfAdjoint(Measure1D.from_atoms(atoms)), 1.0, (-4, 3, -1.8, 1.8), (175, 90), workers=4)
print("binned TV against the density grid:", binned_tv(eigs, grid))

# %%
# Strictly upper triangular Gaussian (the DT model) plus Ginibre: the
# spectrum fills a disk of radius 1/sqrt(log 2) instead of the unit disk.
ev = ensemble_eigenvalues([EnsembleSpec(512, "dt_upper"), EnsembleSpec(512, "ginibre")], [0])[0]
print("DT radius:", dt_disk_radius(1.0), " fraction inside:", np.mean(np.abs(ev) <= dt_disk_radius(1.0)))
