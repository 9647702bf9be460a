"""Kernel backend selection, done once at import.

Set ``TRUSTPRED_BACKEND=python`` to force the numpy fallback, or
``TRUSTPRED_BACKEND=cython`` to fail loudly when the extension is missing.
"""

import os

from . import _kernels_py

_choice = os.environ.get("TRUSTPRED_BACKEND", "").strip().lower()

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None
    if _choice == "cython":
        raise

if _compiled is not None and _choice != "python":
    kernels = _compiled
    NAME = "cython"
else:
    kernels = _kernels_py
    NAME = "python"


def available() -> dict:
    """All importable backends by name, for benchmarks and cross-checks."""
    found = {"python": _kernels_py}
    if _compiled is not None:
        found["cython"] = _compiled
    return found
