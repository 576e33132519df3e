"""Hot-kernel backend selection.

The compiled Cython extension is preferred when importable; otherwise the
numpy fallback is used.  Override with SYNTHLABEL_KERNELS=compiled|python|auto
(read once, at import).  ``BACKEND`` names the active backend.
"""

from __future__ import annotations

import os

_choice = os.environ.get("SYNTHLABEL_KERNELS", "auto")
if _choice not in ("auto", "compiled", "python"):
    raise ValueError(
        f"SYNTHLABEL_KERNELS must be auto, compiled, or python, got {_choice!r}"
    )

if _choice == "python":
    from . import pyops as _impl

    BACKEND = "python"
else:
    try:
        from . import _convops as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        if _choice == "compiled":
            raise
        from . import pyops as _impl  # type: ignore[no-redef]

        BACKEND = "python"

conv2d_forward = _impl.conv2d_forward
conv2d_backward_input = _impl.conv2d_backward_input
conv2d_backward_kernels = _impl.conv2d_backward_kernels
maxpool2d_forward = _impl.maxpool2d_forward
maxpool2d_backward = _impl.maxpool2d_backward

__all__ = [
    "BACKEND",
    "conv2d_forward",
    "conv2d_backward_input",
    "conv2d_backward_kernels",
    "maxpool2d_forward",
    "maxpool2d_backward",
]
