"""Backend selection for the grid-chain kernels.

The compiled extension is used when it was built; otherwise the numpy
reference implementation is used. Set ``LLMO_KERNELS=python`` to force the
fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("LLMO_KERNELS", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        _impl = _compiled
        BACKEND = "cython"

select_codes = _impl.select_codes
exact_transition = _impl.exact_transition
simulate_chain = _impl.simulate_chain
last_positive = _kernels_py.last_positive


def backends():
    """All importable backends by name (the fallback is always present)."""
    found = {"python": _kernels_py}
    try:
        from . import _kernels

        found["cython"] = _kernels
    except ImportError:
        pass
    return found
