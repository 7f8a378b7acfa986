"""Element-kernel backend selection.

The compiled Cython kernel is used when importable; set
``GRADAMAGE_PURE_PYTHON=1`` to force the numpy implementation.
"""

import os

from . import _pykernels

BACKEND = "python"
ua_kernel_py = _pykernels.ua_kernel
ua_kernel_c = None
condense_gd_c = None

try:
    from ._ckernels import condense_gd as condense_gd_c  # noqa: F811
    from ._ckernels import ua_kernel as ua_kernel_c  # noqa: F811
except ImportError:  # extension not built
    pass

if ua_kernel_c is not None and not os.environ.get("GRADAMAGE_PURE_PYTHON"):
    BACKEND = "cython"
    ua_kernel = ua_kernel_c
    condense_gd = condense_gd_c
else:
    ua_kernel = ua_kernel_py
    condense_gd = None  # element_gd falls back to the numpy Schur complement

__all__ = ["BACKEND", "ua_kernel", "ua_kernel_py", "ua_kernel_c", "condense_gd", "condense_gd_c"]
