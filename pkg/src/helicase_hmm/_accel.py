"""JIT backend selection.

Kernels come in two flavours with identical signatures: numba ``@njit``
loops (``kernels_jit``) and vectorised numpy (``kernels_np``).  The numba
path is used when numba imports and ``HHMM_DISABLE_JIT`` is unset or ``0``.
"""

import os

_FLAG = os.environ.get("HHMM_DISABLE_JIT", "0").strip().lower()
JIT_REQUESTED = _FLAG in ("", "0", "false", "no", "off")

try:
    import numba  # noqa: F401

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False

USE_JIT = JIT_REQUESTED and NUMBA_AVAILABLE


def backend_name():
    return "numba" if USE_JIT else "numpy"


def get_kernels():
    """Return the active kernel module."""
    if USE_JIT:
        from helicase_hmm import kernels_jit

        return kernels_jit
    from helicase_hmm import kernels_np

    return kernels_np
