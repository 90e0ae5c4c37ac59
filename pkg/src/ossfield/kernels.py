"""Backend selection for the hot loops.

The compiled extension ``ossfield._core`` is used when it was built and
imports cleanly; otherwise the numpy implementations in
``ossfield._fallback`` are used. :func:`set_backend` switches at run time
(the benchmark and the backend-agreement tests use it). Callers must go
through this module's attributes, never bind the functions locally.
"""

from . import _fallback

try:
    from . import _core
except ImportError:
    _core = None

_NAMES = ("expm_batch", "radial_norm_batch", "symmetric_stable_from_raw",
          "positive_stable_from_raw", "isotropic_from_raw")

BACKEND = None


def available():
    """Names of the backends importable in this process."""
    return ["compiled", "python"] if _core is not None else ["python"]


def set_backend(name):
    """Route the kernel functions to ``"compiled"`` or ``"python"``."""
    global BACKEND
    if name == "compiled":
        if _core is None:
            raise ImportError("compiled extension ossfield._core is not built")
        impl = _core
    elif name == "python":
        impl = _fallback
    else:
        raise ValueError(f"unknown backend {name!r}")
    for fn in _NAMES:
        globals()[fn] = getattr(impl, fn)
    BACKEND = name


set_backend("compiled" if _core is not None else "python")
