"""Kernel backend selection.

The compiled extension is preferred; the numpy fallback keeps the package
fully functional from a source checkout. RBFNS_BACKEND=py|c forces a
backend (c raises if the extension is absent).
"""

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:
    _ckernels = None

_requested = os.environ.get("RBFNS_BACKEND", "auto").lower()
if _requested == "py":
    active = _pykernels
elif _requested == "c":
    if _ckernels is None:
        raise ImportError("RBFNS_BACKEND=c but the compiled kernels are not built")
    active = _ckernels
else:
    active = _ckernels if _ckernels is not None else _pykernels

BACKEND = "compiled" if active is _ckernels else "python"

csr_matvec = active.csr_matvec
ilu0_factor = active.ilu0_factor
ilu0_solve = active.ilu0_solve
