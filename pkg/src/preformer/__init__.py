"""Long-horizon time series forecasting with segment-correlation attention."""

from . import backends
from .autodiff import Tape, Tensor, backward

__version__ = "0.1.0"

__all__ = ["Tensor", "Tape", "backward", "backends", "__version__"]
