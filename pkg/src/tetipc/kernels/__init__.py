"""Hot-kernel backend selection.

The compiled Cython core (``tetipc.kernels._core``) is preferred; the pure
NumPy implementation (``tetipc.kernels._numpy``) is the fallback and the
behavioural reference. Set ``TETIPC_PURE_PYTHON=1`` to force the fallback,
e.g. for the backend benchmark or when the extension was not built.
"""

import os

from . import _numpy

if os.environ.get("TETIPC_PURE_PYTHON", "") not in ("", "0"):
    _impl = _numpy
else:
    try:
        from . import _core as _impl
    except ImportError:
        _impl = _numpy

BACKEND = "core" if _impl is not _numpy else "numpy"

PAIR_PT = _numpy.PAIR_PT
PAIR_EE = _numpy.PAIR_EE
PAIR_PE = _numpy.PAIR_PE
PAIR_PP = _numpy.PAIR_PP

pt_classify_batch = _impl.pt_classify_batch
ee_classify_batch = _impl.ee_classify_batch
cross_sq_batch = _impl.cross_sq_batch
matvec_blocks = _impl.matvec_blocks
accd_max_step = _impl.accd_max_step


def get_backend(name):
    """Return the named backend module ('core' or 'numpy')."""
    if name == "numpy":
        return _numpy
    if name == "core":
        from . import _core

        return _core
    raise ValueError(f"unknown kernel backend {name!r}")
