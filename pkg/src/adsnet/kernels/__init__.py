"""Hot kernels with a compiled implementation and a numpy fallback.

The compiled extension is used when it was built (``pip install -e .``);
set ``ADSNET_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _fallback

if os.environ.get("ADSNET_PURE_PYTHON", "") not in ("", "0"):
    _compiled = None
else:
    try:
        from . import _nearest as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"
nearest_foreground = (_compiled or _fallback).nearest_foreground
nearest_foreground_python = _fallback.nearest_foreground
nearest_foreground_compiled = _compiled.nearest_foreground if _compiled is not None else None

__all__ = ["BACKEND", "nearest_foreground", "nearest_foreground_python", "nearest_foreground_compiled"]
