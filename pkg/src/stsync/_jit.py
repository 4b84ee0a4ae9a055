"""Optional numba acceleration for the numeric kernels.

Every kernel in :mod:`stsync._kernels` is written in the numba-compatible
subset of Python. When numba is importable and ``STSYNC_DISABLE_NUMBA`` is not
set to a truthy value, the kernels are compiled with ``numba.njit``; otherwise
they run as ordinary Python functions over floats and numpy arrays.
"""

import os

ENV_FLAG = "STSYNC_DISABLE_NUMBA"

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None


def _disabled_by_env():
    return os.environ.get(ENV_FLAG, "").strip().lower() in ("1", "true", "yes", "on")


NUMBA_ENABLED = numba is not None and not _disabled_by_env()


def njit(func=None, **kwargs):
    """Compile ``func`` with numba when enabled, else return it unchanged.

    Defaults to ``cache=True`` and ``nogil=True`` so formation runs can use
    threads. Usable bare (``@njit``) or with options (``@njit(cache=False)``).
    """
    opts = {"cache": True, "nogil": True}
    opts.update(kwargs)

    def wrap(f):
        if NUMBA_ENABLED:
            return numba.njit(**opts)(f)
        return f

    if func is not None:
        return wrap(func)
    return wrap


def python_impl(kernel):
    """Return the uncompiled Python function behind ``kernel``."""
    return getattr(kernel, "py_func", kernel)
