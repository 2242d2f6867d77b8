"""Backend selection for the co-simulation kernels.

The compiled extension is used when it imports; setting
``GPEBO_PURE_PYTHON=1`` forces the pure-Python implementation.
"""
from __future__ import annotations

import os
from contextlib import contextmanager

from . import _core_py

BACKENDS = {"python": _core_py}

try:
    from . import _core as _compiled
except ImportError:  # extension not built
    _compiled = None
else:
    BACKENDS["cython"] = _compiled

if os.environ.get("GPEBO_PURE_PYTHON", "") not in ("", "0") or _compiled is None:
    BACKEND = "python"
else:
    BACKEND = "cython"

_impl = BACKENDS[BACKEND]
MAX_COMPILED_MACHINES = 4


def get_backend(name: str | None = None):
    """Kernel module by name; ``None`` gives the active one."""
    name = name or BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None


@contextmanager
def use_backend(name: str):
    """Temporarily route the module-level ``simulate_*`` functions to ``name``."""
    global _impl
    saved = _impl
    _impl = get_backend(name)
    try:
        yield _impl
    finally:
        _impl = saved


def simulate_academic(*args, **kwargs):
    return _impl.simulate_academic(*args, **kwargs)


def simulate_power(z0, a, *args, **kwargs):
    # the compiled kernel uses fixed-size buffers
    impl = _impl if len(a) <= MAX_COMPILED_MACHINES else _core_py
    return impl.simulate_power(z0, a, *args, **kwargs)


def simulate_reactor(z0, K_y, K_x, *args, **kwargs):
    # the compiled kernel is specialised to two reactions
    two = len(K_y) == 2 and len(K_x) == 2 and len(K_y[0]) == 2
    impl = _impl if two else _core_py
    return impl.simulate_reactor(z0, K_y, K_x, *args, **kwargs)
