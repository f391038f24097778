"""Backend selection for the micro-step loop.

The compiled kernel is used when it imports; ``TDRESERVOIR_BACKEND=python``
forces the numpy fallback.
"""

import os

from . import _kernel_py

try:
    from . import _kernel as _kernel_c
except ImportError:  # extension not built
    _kernel_c = None

BACKENDS = {"python": _kernel_py.run_steps}
if _kernel_c is not None:
    BACKENDS["compiled"] = _kernel_c.run_steps

_requested = os.environ.get("TDRESERVOIR_BACKEND", "").strip().lower()
if _requested and _requested not in ("python", "compiled"):
    raise ImportError(f"unknown TDRESERVOIR_BACKEND {_requested!r}")
if _requested == "compiled" and _kernel_c is None:
    raise ImportError("TDRESERVOIR_BACKEND=compiled but the extension is not built")

DEFAULT_BACKEND = _requested or ("compiled" if _kernel_c is not None else "python")


def get_backend(name=None):
    name = name or DEFAULT_BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None
