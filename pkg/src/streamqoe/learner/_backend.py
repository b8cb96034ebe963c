"""Pick the tree kernel: compiled extension if importable, numpy otherwise.

Set ``STREAMQOE_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _forest_py

try:
    if os.environ.get("STREAMQOE_PURE_PYTHON"):
        raise ImportError("pure-Python backend requested")
    from . import _forest_core
except ImportError:
    _forest_core = None

DEFAULT = "cython" if _forest_core is not None else "python"


def available():
    return ("cython", "python") if _forest_core is not None else ("python",)


def kernel(name=None):
    name = name or DEFAULT
    if name == "python":
        return _forest_py
    if name == "cython":
        if _forest_core is None:
            raise ImportError("compiled forest kernel is not built; run `pip install -e .`")
        return _forest_core
    raise ValueError(f"unknown forest backend {name!r}")
