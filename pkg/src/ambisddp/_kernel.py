"""Select the simplex iteration kernel.

The compiled kernel is used when it was built, unless the environment
variable ``AMBISDDP_PURE_PYTHON`` is set to a non-empty value other than 0.
"""
import os

from . import _simplex_py

python_iterate = _simplex_py.iterate

try:
    from ._simplex_ext import iterate as compiled_iterate
except ImportError:  # pragma: no cover - depends on the build
    compiled_iterate = None

if compiled_iterate is not None and os.environ.get("AMBISDDP_PURE_PYTHON", "") in ("", "0"):
    iterate = compiled_iterate
    BACKEND = "cython"
else:
    iterate = python_iterate
    BACKEND = "python"
