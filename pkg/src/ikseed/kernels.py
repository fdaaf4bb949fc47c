"""Kernel backend selection.

The compiled ``_kernels_c`` extension is used when it imports; otherwise the
numpy implementation in ``_kernels_py`` is used. Setting ``IKSEED_BACKEND``
to ``python`` forces the fallback, ``c`` makes a missing extension an error.
"""

import os

from . import _kernels_py

_requested = os.environ.get("IKSEED_BACKEND", "auto").lower()

if _requested == "python":
    _impl = _kernels_py
else:
    try:
        from . import _kernels_c as _impl
    except ImportError:
        if _requested == "c":
            raise
        _impl = _kernels_py

BACKEND = "c" if _impl is not _kernels_py else "python"

serial_fk = _impl.serial_fk
serial_jacobian = _impl.serial_jacobian
serial_goodness = _impl.serial_goodness
gram_root_det = _impl.gram_root_det


def get_backend(name):
    """Kernel module by name, for side-by-side comparison."""
    if name == "python":
        return _kernels_py
    if name == "c":
        from . import _kernels_c

        return _kernels_c
    raise ValueError(f"unknown backend {name!r}")
