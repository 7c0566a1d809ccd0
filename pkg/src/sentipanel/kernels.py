"""Select the LSTM recurrence backend at import time.

The compiled extension is used when it was built; otherwise the numpy
implementation is used.  Set ``SENTIPANEL_PURE_PYTHON=1`` to force the
fallback.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _lstm_py


def _load_compiled() -> ModuleType | None:
    try:
        from . import _lstm_ext
    except ImportError:
        return None
    return _lstm_ext


compiled = _load_compiled()
python = _lstm_py

if compiled is not None and not os.environ.get("SENTIPANEL_PURE_PYTHON"):
    active: ModuleType = compiled
    BACKEND = "compiled"
else:
    active = _lstm_py
    BACKEND = "python"


def get(name: str) -> ModuleType:
    """Return the ``"compiled"`` or ``"python"`` kernel module."""
    if name == "python":
        return _lstm_py
    if name == "compiled":
        if compiled is None:
            raise ImportError("compiled LSTM kernel was not built")
        return compiled
    raise ValueError(f"unknown backend {name!r}")
