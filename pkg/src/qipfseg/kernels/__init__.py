"""Hot-loop kernels with a compiled core and a pure-Python fallback.

The Cython extension is used when it built successfully; set
QIPFSEG_PURE_PYTHON=1 to force the numpy fallback.
"""

import os

if os.environ.get("QIPFSEG_PURE_PYTHON"):
    from . import _ref as _impl
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _ref as _impl

BACKEND = _impl.BACKEND
eval_fields = _impl.eval_fields

__all__ = ["BACKEND", "eval_fields"]
