"""Backend selection for the inner loops.

The compiled extension ``gpcde._kernels`` is used when it imports; otherwise
the numpy implementation in ``gpcde._pykernels`` takes over.  ``use_backend``
switches explicitly (the benchmark and the cross-backend tests use it), and
``GPCDE_BACKEND=python`` forces the fallback at import.
"""

import os

from . import _pykernels

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_active = _compiled if _compiled is not None else _pykernels
if os.environ.get("GPCDE_BACKEND", "").lower() == "python":
    _active = _pykernels


def available_backends():
    return ["compiled", "python"] if _compiled is not None else ["python"]


def backend_name():
    return "compiled" if _active is _compiled and _compiled is not None else "python"


def get_backend(name=None):
    if name is None:
        return _active
    if name == "python":
        return _pykernels
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def use_backend(name):
    global _active
    _active = get_backend(name)
    return _active


def mixture_tail(x, ts, taus, shift=0):
    return _active.mixture_tail(x, ts, taus, shift)


def de_loop(*args):
    return _active.de_loop(*args)


def peel_flood(cap, ea, eb, n_cn, max_iters):
    return _active.peel_flood(cap, ea, eb, n_cn, max_iters)


__all__ = [
    "available_backends", "backend_name", "get_backend", "use_backend",
    "mixture_tail", "de_loop", "peel_flood",
]
