"""Hot numerical kernels with a compiled backend and a numpy fallback.

The compiled Cython extension ``_ckernels`` is used when it imports cleanly.
Set ``ACTIR_PURE_PYTHON=1`` to force the numpy fallback.

Functions
---------
dense_forward
    Batched affine map.
softmax_xent
    Row-wise cross-entropy losses and softmax probabilities.
group_center
    Subtract per-label group means from rows.
finetune_head
    Full Adam loop for a linear softmax head on frozen features.
"""

import os

from . import _reference

BACKEND = "python"

if os.environ.get("ACTIR_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _reference
else:
    _impl = _reference

dense_forward = _impl.dense_forward
softmax_xent = _impl.softmax_xent
group_center = _impl.group_center
finetune_head = _impl.finetune_head

__all__ = [
    "BACKEND",
    "dense_forward",
    "softmax_xent",
    "group_center",
    "finetune_head",
]
