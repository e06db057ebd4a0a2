"""zonecast: data-driven zone-temperature prediction toolkit.

Trajectory-matrix (behavioral) predictors and adaptive ARX models, a
gap-aware rolling evaluation harness, and a synthetic RC building plant
that provides verifiable ground truth.
"""

__version__ = "0.1.0"

from .accel import using_numba

__all__ = ["using_numba", "__version__"]
