"""SOM + MLP + HMM isolated-word recognizer with genetic tuning of the HMM."""

from asrlab.kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
