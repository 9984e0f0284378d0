"""Kernel backend selection.

Two interchangeable implementations of the per-document inference kernel
exist: a Cython extension (`_core`, backend name "c") and a NumPy fallback
(`_fallback`, backend name "numpy").  The compiled one is picked by default
when it built; set TOPICDISTILL_KERNEL=numpy (or =c) to force a choice.

The two backends follow the same update order but may differ in the last
floating-point bits (BLAS reductions vs. sequential C loops).  Determinism
guarantees hold per backend, not across them.
"""

from __future__ import annotations

import os

from . import _fallback

try:
    from . import _core
except ImportError:  # extension not built; pure NumPy still works
    _core = None

_BACKENDS = {"numpy": _fallback}
if _core is not None:
    _BACKENDS["c"] = _core


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def default_backend_name() -> str:
    env = os.environ.get("TOPICDISTILL_KERNEL", "").strip()
    if env:
        return env
    return "c" if "c" in _BACKENDS else "numpy"


def get_backend(name: str | None = None):
    """Return the kernel module for `name` (None → default selection)."""
    if name is None:
        name = default_backend_name()
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(
            f"unknown kernel backend {name!r}; available: {available_backends()}"
        ) from None
