"""
A selfadjoint starting point with three atoms
=============================================

x0 has spectral law 0.4 delta_{-2} + 0.1 delta_{-0.8} + 0.5 delta_{1}.  For
selfadjoint x0 everything reduces to real-variable profiles: the height
v_t(a) of the domain above a, and psi_t(a), whose slope gives the density.
"""

# %%
import numpy as np

from brownlab import EllipticParams, Measure1D, SelfAdjoint, density_circular, density_grid
from brownlab.selfadjoint_case import biane_profile, density_elliptic_sa, psi_t_prime, v_t

mu = Measure1D.from_atoms([(-2.0, 0.4), (-0.8, 0.1), (1.0, 0.5)])
op = SelfAdjoint(mu)

for t in (0.1, 0.5, 1.0):
    a = np.linspace(-3.5, 2.5, 601)
    inside = np.array([v_t(mu, t, x) > 0 for x in a])
    pieces = np.count_nonzero(np.diff(inside.astype(int)) == 1) + int(inside[0])
    print(f"t={t}: domain meets the real axis in {pieces} interval(s)")

# %%
# The density does not depend on the height b; only a matters.
t = 1.0
for b in (0.0, 0.3, 0.6):
    print("density at -1.9 +", b, "i:", density_circular(op, -1.9 + 1j * b, t))
print("psi'(-1.9) / (2 pi t):", psi_t_prime(mu, t, -1.9) / (2 * np.pi * t))

# %%
grid = density_grid(op, t, (-4, 3, -1.8, 1.8), (140, 72))
print("grid mass:", grid.mass)

# %%
# Under the twisted elliptic map the vertical lines become slanted; the
# density of the image is read off by inverting the shear.
g = 0.25 + 0.25j
prof = biane_profile(mu, t, g)
print("shear is increasing:", bool(np.all(np.diff(prof.delta) > 0)))
print("elliptic density at 0.5:", density_elliptic_sa(mu, t, g, 0.5))

# %%
# The CLI renders the same grid as a heat map:
#   brownlab density --config three_atoms.json --svg --out demo
