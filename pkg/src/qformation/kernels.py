"""Backend selection for the hot gossip loops.

The compiled extension is preferred; set ``QFORMATION_PURE_PYTHON=1`` to force
the pure-Python implementation (used by the cross-backend tests and the
benchmark).
"""

from __future__ import annotations

import os

from . import _pykernels

if os.environ.get("QFORMATION_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

z_steps = _impl.z_steps
y_steps = _impl.y_steps


def get_backend(name: str):
    """Return the kernel module for ``"python"`` or ``"compiled"``."""
    if name == "python":
        return _pykernels
    if name == "compiled":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def compiled_available() -> bool:
    try:
        from . import _ckernels  # noqa: F401
    except ImportError:
        return False
    return True
