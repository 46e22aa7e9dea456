"""
Haar unitary plus circular noise: a single ring
===============================================

u + c_t is R-diagonal, so its Brown measure is rotation-invariant and lives
on the annulus sqrt((1-t)+) < |z| < sqrt(1+t).  The radial CDF and the
ellipses traced by Phi have closed forms; here they are compared with the
generic solver and with sampled matrices.
"""

# %%
import numpy as np

from brownlab import EllipticParams, HaarUnitary, phi
from brownlab.brown_circular import density_circular_many
from brownlab.randmat_lab import EnsembleSpec, ensemble_eigenvalues, radial_ks
from brownlab.special_operators import (RDiagonalProfile, brown_cdf_rdiag, haar_axes_gamma, haar_cdf,
                                        haar_cdf_clipped, haar_radii)

t = 0.5
lo, hi = haar_radii(t)
print(f"annulus: {lo:.6f} < |z| < {hi:.6f}")

# %%
# Closed form against the general R-diagonal recipe.
prof = RDiagonalProfile.circular_deformation(HaarUnitary(), t)
for r in (0.8, 1.0, 1.2):
    print(f"r={r}: closed {haar_cdf(r, t):.12f}  R-diagonal {brown_cdf_rdiag(prof, r):.12f}")

# %%
# The density itself, summed over a thin shell, recovers dF/dr.
r, dr = 1.0, 1e-4
th = np.linspace(0, 2 * np.pi, 64, endpoint=False)
shell = density_circular_many(HaarUnitary(), r * np.exp(1j * th), t).mean() * 2 * np.pi * r
print("shell density:", shell, " dF/dr:", (haar_cdf(r + dr, t) - haar_cdf(r - dr, t)) / (2 * dr))

# %%
# Circles |lam| = sqrt(1 + s) map to ellipses.
for s in (-0.3, 0.0, 0.5):
    rad = np.sqrt(1 + s)
    img = [abs(phi(HaarUnitary(), rad * np.exp(1j * a), EllipticParams(t, 0.4))) for a in (0, np.pi / 2)]
    print(f"s={s}: axes {haar_axes_gamma(s, t, 0.4)}  via Phi {sorted(img, reverse=True)}")

# %%
eigs = ensemble_eigenvalues([EnsembleSpec(512, "haar_unitary"), EnsembleSpec(512, "ginibre", t=t)], [0])[0]
print("radial KS at n=512:", radial_ks(eigs, lambda x: haar_cdf_clipped(x, t)))
