"""Select the compiled kernels when available, else the numpy fallback.

Set ``BSDEFUND_PURE_PYTHON=1`` to force the fallback. ``BACKEND`` names the
active implementation; both modules stay importable for benchmarking.
"""

import os

from . import _kernels_py as python_kernels

try:
    from . import _kernels as compiled_kernels
except ImportError:  # extension not built
    compiled_kernels = None

PURE_PYTHON_ENV = "BSDEFUND_PURE_PYTHON"

if compiled_kernels is not None and not os.environ.get(PURE_PYTHON_ENV):
    _active, BACKEND = compiled_kernels, "compiled"
else:
    _active, BACKEND = python_kernels, "python"

jacobi_eigh = _active.jacobi_eigh
funding_fl = _active.funding_fl
