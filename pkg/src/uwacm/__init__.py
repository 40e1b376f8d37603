"""Data-driven underwater acoustic channel modeling.

Synthetic transmit/receive data generation (QPSK, raised-cosine shaping,
multipath channel) plus six from-scratch regressors scored by MAPE.
"""

from .errors import FormatError, InvalidArgument, NumericError

__version__ = "0.1.0"

__all__ = ["FormatError", "InvalidArgument", "NumericError", "__version__"]
