"""NumPy implementations of the element-loop kernels.

Every function here has a compiled twin in ``_kernels.pyx`` with the same
signature; ``rkgfem.kernels`` picks one at import time.

Conventions shared by all kernels:

``elem_dofs``  int array (E, nb); negative entries mark eliminated DOFs (value 0)
``table``      real array (nq, nb) of reference basis values at quadrature points
``cw``         real array (nq,) of quadrature weights times the element Jacobian
"""
import numpy as np


def _gather(coeffs, elem_dofs):
    mask = elem_dofs >= 0
    local = np.zeros(elem_dofs.shape, dtype=np.complex128)
    local[mask] = coeffs[elem_dofs[mask]]
    return local


def _scatter(local, elem_dofs, n):
    mask = elem_dofs >= 0
    idx = elem_dofs[mask]
    vals = local[mask]
    re = np.bincount(idx, weights=vals.real, minlength=n)
    im = np.bincount(idx, weights=vals.imag, minlength=n)
    return re + 1j * im


def gather_eval(coeffs, elem_dofs, table):
    """Values of the FE expansion at every (element, quadrature point)."""
    return _gather(np.asarray(coeffs, dtype=np.complex128), elem_dofs) @ table.T


def scatter_load(values, elem_dofs, table, n):
    """g_j = sum_e sum_q values[e, q] * table[q, local(j)]."""
    return _scatter(np.asarray(values, dtype=np.complex128) @ table, elem_dofs, n)


def weighted_load(weight, z, elem_dofs, table, cw, n):
    """Load vector of (weight * z_h, phi_j), weight given per quadrature point."""
    zq = gather_eval(z, elem_dofs, table)
    return scatter_load(weight * zq * cw, elem_dofs, table, n)


def nonlinear_load(a, b, elem_dofs, table, cw, n):
    """Load vector of (0.5 (|a|^2 + |b|^2) (a + b) / 2, phi_j) and max |a|^2 over quadrature points."""
    aq = gather_eval(a, elem_dofs, table)
    bq = gather_eval(b, elem_dofs, table)
    abs_a = aq.real ** 2 + aq.imag ** 2
    w = 0.5 * (abs_a + bq.real ** 2 + bq.imag ** 2)
    g = scatter_load(w * 0.5 * (aq + bq) * cw, elem_dofs, table, n)
    return g, float(abs_a.max()) if abs_a.size else 0.0


def quartic_sum(a, elem_dofs, table, cw):
    """Quadrature value of the integral of |a_h|^4."""
    aq = gather_eval(a, elem_dofs, table)
    d = aq.real ** 2 + aq.imag ** 2
    return float(np.sum(d * d * cw))


def plaquette_winding(phase):
    """Winding of a vertex phase grid (ny+1, nx+1) around each cell, counterclockwise."""
    p00 = phase[:-1, :-1]
    p10 = phase[:-1, 1:]
    p11 = phase[1:, 1:]
    p01 = phase[1:, :-1]
    total = np.zeros(p00.shape)
    for d in (p10 - p00, p11 - p10, p01 - p11, p00 - p01):
        total += (d + np.pi) % (2.0 * np.pi) - np.pi
    return np.rint(total / (2.0 * np.pi)).astype(np.int64)
