"""Decentralized automotive-radar spectrum allocation: FMCW interference
signal model, two-lane traffic microsimulation, multi-radar environment,
recurrent Q-network learners, baseline policies, and an experiment harness.

Set RADARSPECTRUM_NUMBA=0 to run the pure-numpy kernel fallback.
"""

from ._kernels import USE_NUMBA

__all__ = ["USE_NUMBA", "__version__"]
__version__ = "0.1.0"
