"""Per-document computational kernels with two interchangeable backends.

``texttovec.kernels.reference`` is pure numpy; ``texttovec.kernels.jit``
carries numba ``@njit`` versions of the same functions. The active
backend is picked from the ``TEXTTOVEC_BACKEND`` environment variable
("numba" or "numpy"; default numba when importable, numpy otherwise)
and can be switched at runtime with :func:`use_backend`.

Both backends expose the same five functions with identical signatures:

- ``docnade_logps(doc, W, U, b, e, W_deep, e_deep, act_id)``
- ``docnade_grads(doc, W, U, b, e, W_deep, e_deep, act_id)``
- ``ctx_logps(doc, W, U, b, e, W_deep, e_deep, act_id, lam, Wx, Wh, bias, w_bos, E_rows, use_prior)``
- ``ctx_grads(...)`` (same arguments as ``ctx_logps``)
- ``lstm_states(X, Wx, Wh, bias)``

Conventions: documents are int64 id arrays; position-indexed quantities
are (D, H) row-per-position matrices; activation ids are 0 = sigmoid,
1 = tanh; LSTM gate blocks are ordered input, forget, candidate, output.
"""

from __future__ import annotations

import logging
import os

import numpy as np

log = logging.getLogger(__name__)

BACKENDS = ("numba", "numpy")

ACT_SIGMOID = 0
ACT_TANH = 1
ACT_IDS = {"sigmoid": ACT_SIGMOID, "tanh": ACT_TANH}

_active = None
_active_name = None


def _load(name: str):
    if name == "numpy":
        from . import reference

        return reference
    if name == "numba":
        from . import jit

        return jit
    raise ValueError(f"unknown kernel backend {name!r}; expected one of {BACKENDS}")


def _default_name() -> str:
    env = os.environ.get("TEXTTOVEC_BACKEND", "").strip().lower()
    if env:
        if env not in BACKENDS:
            raise ValueError(
                f"TEXTTOVEC_BACKEND={env!r} is invalid; expected one of {BACKENDS}"
            )
        return env
    try:
        import numba  # noqa: F401

        return "numba"
    except ImportError:
        log.warning("numba unavailable, falling back to the numpy backend")
        return "numpy"


def use_backend(name: str):
    """Select the active kernel backend; returns the backend module."""
    global _active, _active_name
    _active = _load(name)
    _active_name = name
    return _active


def active():
    """The currently selected backend module."""
    if _active is None:
        use_backend(_default_name())
    return _active


def backend_name() -> str:
    active()
    return _active_name


def backend_for(arr) -> object:
    """Backend honoring the array dtype: single-precision work always
    runs on the numpy backend (the jitted kernels are float64-only)."""
    if arr.dtype == np.float32:
        return _load("numpy")
    return active()


def docnade_logps(*args):
    return backend_for(args[1]).docnade_logps(*args)


def docnade_grads(*args):
    return backend_for(args[1]).docnade_grads(*args)


def ctx_logps(*args):
    return backend_for(args[1]).ctx_logps(*args)


def ctx_grads(*args):
    return backend_for(args[1]).ctx_grads(*args)


def lstm_states(*args):
    return backend_for(args[0]).lstm_states(*args)
