"""Pick the compiled kernels when available, else the pure-Python fallback.

Set ``FREEPERIOD_PURE_PYTHON=1`` to force the fallback.
"""
import os

BACKEND = "python"
if os.environ.get("FREEPERIOD_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._gf2 import gf2_rank
        BACKEND = "cython"
    except ImportError:
        pass
if BACKEND == "python":
    from ._gf2_py import gf2_rank

__all__ = ["gf2_rank", "BACKEND"]
