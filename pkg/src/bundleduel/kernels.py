"""Kernel backend selection: the compiled extension when built, else NumPy."""
from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_backend = _compiled if _compiled is not None else _kernels_py


def backend_name() -> str:
    return "compiled" if _backend is _compiled else "python"


def use_backend(name: str) -> None:
    """Switch between "compiled" and "python" kernels at runtime."""
    global _backend
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available; build the extension first")
        _backend = _compiled
    elif name == "python":
        _backend = _kernels_py
    else:
        raise ValueError(f"unknown backend {name!r}")


def compiled_available() -> bool:
    return _compiled is not None


def choose_many(table, order, v, q):
    return _backend.choose_many(table, order, v, q)


def explicit_payoffs(table, order, qprof, vprof, vw):
    return _backend.explicit_payoffs(table, order, qprof, vprof, vw)
