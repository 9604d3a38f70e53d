"""Kernel backend selection.

Both kernel implementations are always importable when numba is installed;
``RCFEEDBACK_NUMBA`` only chooses the default. Set it to "0" (or "false",
"no", "off") to route every simulation through the pure-numpy path.
"""
import os

_FALSE = {"0", "false", "no", "off"}

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False


def numba_enabled():
    flag = os.environ.get("RCFEEDBACK_NUMBA", "1").strip().lower()
    return HAVE_NUMBA and flag not in _FALSE


BACKEND = "numba" if numba_enabled() else "numpy"
