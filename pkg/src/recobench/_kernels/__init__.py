"""Contrastive-loss core with backend selection at import time.

Prefers the compiled extension; falls back to the vectorized NumPy
implementation when the extension was not built.  Set the environment
variable ``RECOBENCH_PURE_PYTHON=1`` to force the fallback (used by the
backend-parity tests and the benchmark).
"""

import os

from . import fallback

if os.environ.get("RECOBENCH_PURE_PYTHON"):
    _impl = fallback
else:
    try:
        from . import _core as _impl
    except ImportError:
        _impl = fallback

BACKEND = "python" if _impl is fallback else "cython"
contrastive_core = _impl.contrastive_core
