"""Hot numeric kernels with a compiled core and a NumPy fallback.

The compiled Cython module is preferred when it was built; setting the
environment variable ``SDFSLAM_PURE_PYTHON=1`` forces the fallback. Both
implementations share one contract (see ``_reference`` docstrings) and are
checked against each other in the test suite.
"""

import os

from . import _reference

if os.environ.get("SDFSLAM_PURE_PYTHON"):
    _impl = _reference
    BACKEND = "python"
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _reference
        BACKEND = "python"

bilinear_wf = _impl.bilinear_wf
bilinear_fw = _impl.bilinear_fw
traverse_free = _impl.traverse_free
bicubic_fw = _impl.bicubic_fw

__all__ = [
    "BACKEND",
    "bilinear_wf",
    "bilinear_fw",
    "traverse_free",
    "bicubic_fw",
]
