"""Kernel backend selection.

The compiled extension is preferred when present; ``EQALLOC_BACKEND=python``
forces the numpy fallback, ``EQALLOC_BACKEND=c`` insists on the extension.
Both backends consume identical pre-drawn random arrays, so results differ
at most by floating-point summation order.
"""

import os

from . import _pykernels

_choice = os.environ.get("EQALLOC_BACKEND", "auto").lower()

if _choice == "python":
    _impl = _pykernels
elif _choice == "c":
    from . import _ckernels as _impl
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = _impl.BACKEND
srswor_indices = _impl.srswor_indices
systematic_positions = _impl.systematic_positions
replicate_sums = _impl.replicate_sums


def available_backends():
    """Names of the kernel backends importable in this environment."""
    names = ["python"]
    try:
        from . import _ckernels  # noqa: F401

        names.insert(0, "c")
    except ImportError:
        pass
    return names


def get_backend(name):
    """Return the kernel module for an explicit backend name."""
    if name == "python":
        return _pykernels
    if name == "c":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend: {name!r}")
