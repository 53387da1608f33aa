"""Backend selection for the hot loops.

The compiled Cython module is used when it was built; otherwise the numpy
fallback. Set ``ASRLAB_PURE_PYTHON=1`` to force the fallback.
"""

import os

try:
    if os.environ.get("ASRLAB_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend requested")
    from asrlab import _kernels as _impl

    BACKEND = "compiled"
except ImportError:
    from asrlab import _fallback as _impl

    BACKEND = "python"

som_train_epoch = _impl.som_train_epoch
mlp_sgd_epoch = _impl.mlp_sgd_epoch
mlp_forward_rows = _impl.mlp_forward_rows
viterbi_log = _impl.viterbi_log
forward_scaled = _impl.forward_scaled

__all__ = [
    "BACKEND",
    "som_train_epoch",
    "mlp_sgd_epoch",
    "mlp_forward_rows",
    "viterbi_log",
    "forward_scaled",
]
