"""
From the circular law to the uniform ellipse
============================================

x0 = 0 is the simplest starting point: the Brown measure of c_t is uniform
on the disk of radius sqrt(t).  Switching on the elliptic parameter gamma
pushes that disk through Phi and flattens it into an ellipse.
"""

# %%
import math

import numpy as np

from brownlab import EllipticParams, Zero, density_circular, density_grid, phi, pushforward_density

t = 1.0
print("density at 0.3+0.2i:", density_circular(Zero(), 0.3 + 0.2j, t), "vs 1/pi =", 1 / math.pi)

# %%
# The grid version carries the same constant inside the disk and zero outside.
grid = density_grid(Zero(), t, (-1.2, 1.2, -1.2, 1.2), (121, 121))
print("grid mass:", grid.mass)

# %%
# Push the disk forward with gamma = 0.5.  The unit circle lands on an
# ellipse with semi-axes 1 + gamma and 1 - gamma.
params = EllipticParams(t, 0.5)
rim = [phi(Zero(), np.exp(1j * th), params) for th in np.linspace(0, 2 * math.pi, 9)]
print("|Phi| on the unit circle:", np.round(np.abs(rim), 12))

field = pushforward_density(Zero(), params, grid)
print("pushed density range:", field.dst_density.min(), field.dst_density.max())
print("expected constant   :", 1 / (math.pi * (1 - 0.25)))
print("transported mass    :", field.transported_mass)

# %%
# A complex gamma only rotates the ellipse: the axes stay 1.5 and 0.5.
params = EllipticParams(t, 0.5j)
rim = np.array([phi(Zero(), np.exp(1j * th), params) for th in np.linspace(0, 2 * math.pi, 721)])
print("gamma = 0.5i axes:", np.abs(rim).max(), np.abs(rim).min())
