"""Integrator backend selection.

The compiled Cython kernel is preferred when present; the pure-NumPy
implementation is the fallback. ``ECGDENOISE_BACKEND=python`` forces the
fallback and ``ECGDENOISE_BACKEND=native`` demands the extension (raising if
it is not built). Both expose the same ``rk4_mcsharry`` contract.
"""
import os

from . import _mcsharry_np

_requested = os.environ.get("ECGDENOISE_BACKEND", "").strip().lower()
if _requested not in ("", "native", "python"):
    raise RuntimeError(
        f"ECGDENOISE_BACKEND={_requested!r} not understood; "
        "use 'native' or 'python'"
    )

if _requested == "python":
    _impl = _mcsharry_np
else:
    try:
        from . import _mcsharry_cy as _impl
    except ImportError:
        if _requested == "native":
            raise RuntimeError(
                "ECGDENOISE_BACKEND=native but the compiled kernel is not "
                "built; run `python setup.py build_ext --inplace`"
            ) from None
        _impl = _mcsharry_np

BACKEND = _impl.BACKEND_NAME
rk4_mcsharry = _impl.rk4_mcsharry


def available_backends():
    """Names of importable integrator backends."""
    names = []
    try:
        from . import _mcsharry_cy  # noqa: F401
        names.append("native")
    except ImportError:
        pass
    names.append("python")
    return names
