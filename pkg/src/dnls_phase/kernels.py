"""Backend selection for the hot loops.

The compiled extension ``_kernels`` is used when it imports and the
environment variable ``DNLS_PHASE_PURE_PYTHON`` is unset or ``0``;
otherwise the pure-Python module ``_kernels_py`` is used. ``BACKEND``
names the active choice.
"""

from __future__ import annotations

import os

from . import _kernels_py

PURE_ENV = "DNLS_PHASE_PURE_PYTHON"

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def _select():
    if _compiled is not None and os.environ.get(PURE_ENV, "0") in ("", "0"):
        return _compiled, "cython"
    return _kernels_py, "python"


_impl, BACKEND = _select()
metropolis_sweep = _impl.metropolis_sweep
count_returns = _impl.count_returns

compiled = _compiled
python = _kernels_py
