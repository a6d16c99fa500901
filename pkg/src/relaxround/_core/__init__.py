"""Hot-loop kernels: the compiled extension when available, numpy otherwise.

Set ``RELAXROUND_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _fallback

BACKEND = "python"
if os.environ.get("RELAXROUND_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _fallback
else:
    _impl = _fallback

jinxin_forward = _impl.jinxin_forward
jinxin_adjoint = _impl.jinxin_adjoint

__all__ = ["BACKEND", "jinxin_forward", "jinxin_adjoint", "_fallback"]
