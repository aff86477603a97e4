"""Kernel backend selection.

The compiled Cython extension is preferred; the NumPy fallback keeps the
package functional without a compiler. Override with SUPERFIELD_KERNEL:
"native" (require the extension), "python" (force the fallback), or
"auto" (default).
"""

from __future__ import annotations

import os

_choice = os.environ.get("SUPERFIELD_KERNEL", "auto").lower()

if _choice not in ("auto", "native", "python"):
    raise ValueError(f"SUPERFIELD_KERNEL must be auto|native|python, got {_choice!r}")

if _choice == "python":
    from . import _pyfallback as _impl
else:
    try:
        from . import _native as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _choice == "native":
            raise
        from . import _pyfallback as _impl

BACKEND = _impl.BACKEND_NAME
composite_view = _impl.composite_view
min_cut = _impl.min_cut


def get_backend(name: str):
    """Return a specific backend module (for benchmarks and equivalence tests)."""
    if name == "python":
        from . import _pyfallback

        return _pyfallback
    if name == "native":
        from . import _native  # type: ignore[attr-defined]

        return _native
    raise ValueError(f"unknown backend {name!r}")
