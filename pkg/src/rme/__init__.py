"""Grid-free radio map estimation toolkit."""

__version__ = "0.1.0"

from .errors import RmeError
from .tensor import GradientTape, Tensor

__all__ = ["GradientTape", "RmeError", "Tensor", "__version__"]
