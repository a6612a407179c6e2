"""Kernel backend selection.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``RKGFEM_PURE_PYTHON`` is set to a non-empty value other
than ``0``, the NumPy fallback is used. Both expose the same functions.
"""
import os

import numpy as np

from . import _kernels_py

_force_py = os.environ.get("RKGFEM_PURE_PYTHON", "") not in ("", "0")

if _force_py:
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"


def _dofs(elem_dofs):
    return np.ascontiguousarray(elem_dofs, dtype=np.int_)


def gather_eval(coeffs, elem_dofs, table):
    return _impl.gather_eval(coeffs, _dofs(elem_dofs), np.ascontiguousarray(table, dtype=float))


def scatter_load(values, elem_dofs, table, n):
    return _impl.scatter_load(values, _dofs(elem_dofs), np.ascontiguousarray(table, dtype=float), int(n))


def weighted_load(weight, z, elem_dofs, table, cw, n):
    return _impl.weighted_load(
        weight, z, _dofs(elem_dofs), np.ascontiguousarray(table, dtype=float),
        np.ascontiguousarray(cw, dtype=float), int(n),
    )


def nonlinear_load(a, b, elem_dofs, table, cw, n):
    return _impl.nonlinear_load(
        a, b, _dofs(elem_dofs), np.ascontiguousarray(table, dtype=float),
        np.ascontiguousarray(cw, dtype=float), int(n),
    )


def quartic_sum(a, elem_dofs, table, cw):
    return _impl.quartic_sum(
        a, _dofs(elem_dofs), np.ascontiguousarray(table, dtype=float), np.ascontiguousarray(cw, dtype=float)
    )


def plaquette_winding(phase):
    return _impl.plaquette_winding(phase)
