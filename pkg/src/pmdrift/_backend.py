"""Pick the compiled kernels when available, else the NumPy fallback.

``PMDRIFT_BACKEND=python`` forces the fallback; ``PMDRIFT_BACKEND=cython``
makes a missing extension an import error instead of a silent downgrade.
"""

import os

from . import _kernels_py

_choice = os.environ.get("PMDRIFT_BACKEND", "auto").lower()

kernels = _kernels_py
name = "python"

if _choice != "python":
    try:
        from . import _ckernels as kernels  # type: ignore[no-redef]

        name = "cython"
    except ImportError:
        if _choice == "cython":
            raise
        kernels = _kernels_py


def get(backend=None):
    """Return the kernel module for ``backend`` (``None`` means the default)."""
    if backend is None:
        return kernels
    if backend == "python":
        return _kernels_py
    if backend == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {backend!r}")


def available():
    """Names of the backends that can be loaded here."""
    out = ["python"]
    try:
        from . import _ckernels  # noqa: F401

        out.append("cython")
    except ImportError:
        pass
    return out
