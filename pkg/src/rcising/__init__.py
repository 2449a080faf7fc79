"""Random-current toolkit for the Ising model in a positive field.

Exact enumeration oracles, worm Monte Carlo for single and double currents,
cone geometry and Ornstein-Zernike analysis of connectivity clusters.
"""

__version__ = "0.1.0"

from .errors import ConfigError, DomainError, ResourceError  # noqa: F401
