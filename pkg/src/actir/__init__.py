"""Anti-causal invariant and adaptive representation learning on numpy."""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
