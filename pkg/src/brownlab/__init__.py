"""Brown measures of operators deformed by circular and elliptic noise."""

from .brown_circular import DensityGrid, density_circular, density_circular_many, density_grid
from .errors import BrownlabError, ConfigError, NumericalFailure
from .pushforward import EllipticParams, phi, pushforward_density, pushforward_pointcloud
from .spectral_core import (FiniteMatrix, HaarUnitary, Measure1D, PlanarAtomic, QuasiNilpotentDT,
                            SelfAdjoint, Zero, operator_from_json, operator_to_json)
from .subordination import solve_w, solve_w0

__version__ = "0.1.0"
