# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled element-loop kernels; see ``_kernels_py`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport M_PI, floor, rint

cnp.import_array()


def gather_eval(coeffs, long[:, ::1] elem_dofs, double[:, ::1] table):
    cdef double complex[::1] c = np.ascontiguousarray(coeffs, dtype=np.complex128)
    cdef Py_ssize_t E = elem_dofs.shape[0], nb = elem_dofs.shape[1], nq = table.shape[0]
    out = np.empty((E, nq), dtype=np.complex128)
    cdef double complex[:, ::1] o = out
    cdef double[16] lr, li
    cdef Py_ssize_t e, q, i
    cdef long d
    cdef double ar, ai, t
    if nb > 16:
        raise ValueError("at most 16 local basis functions")
    with nogil:
        for e in range(E):
            # gather once per element, then real-times-complex sums per point
            for i in range(nb):
                d = elem_dofs[e, i]
                if d >= 0:
                    lr[i] = c[d].real
                    li[i] = c[d].imag
                else:
                    lr[i] = 0.0
                    li[i] = 0.0
            for q in range(nq):
                ar = 0.0
                ai = 0.0
                for i in range(nb):
                    t = table[q, i]
                    ar = ar + lr[i] * t
                    ai = ai + li[i] * t
                o[e, q] = ar + 1j * ai
    return out


def scatter_load(values, long[:, ::1] elem_dofs, double[:, ::1] table, Py_ssize_t n):
    cdef double complex[:, ::1] v = np.ascontiguousarray(values, dtype=np.complex128)
    cdef Py_ssize_t E = elem_dofs.shape[0], nb = elem_dofs.shape[1], nq = table.shape[0]
    out = np.zeros(n, dtype=np.complex128)
    cdef double complex[::1] g = out
    cdef Py_ssize_t e, q, i
    cdef long d
    cdef double complex acc
    for e in range(E):
        for i in range(nb):
            d = elem_dofs[e, i]
            if d < 0:
                continue
            acc = 0
            for q in range(nq):
                acc = acc + v[e, q] * table[q, i]
            g[d] = g[d] + acc
    return out


cdef inline double complex _eval(const double complex[::1] c, const long[:, ::1] dofs,
                                 const double[:, ::1] table, Py_ssize_t e, Py_ssize_t q) noexcept nogil:
    cdef double complex acc = 0
    cdef Py_ssize_t i
    cdef long d
    for i in range(dofs.shape[1]):
        d = dofs[e, i]
        if d >= 0:
            acc = acc + c[d] * table[q, i]
    return acc


cdef void _scatter_point(double complex[::1] g, const long[:, ::1] dofs, const double[:, ::1] table,
                         Py_ssize_t e, Py_ssize_t q, double complex val) noexcept nogil:
    cdef Py_ssize_t i
    cdef long d
    for i in range(dofs.shape[1]):
        d = dofs[e, i]
        if d >= 0:
            g[d] = g[d] + val * table[q, i]


def weighted_load(weight, z, long[:, ::1] elem_dofs, double[:, ::1] table, double[::1] cw, Py_ssize_t n):
    cdef double[:, ::1] w = np.ascontiguousarray(weight, dtype=np.float64)
    cdef double complex[::1] c = np.ascontiguousarray(z, dtype=np.complex128)
    out = np.zeros(n, dtype=np.complex128)
    cdef double complex[::1] g = out
    cdef Py_ssize_t E = elem_dofs.shape[0], nq = table.shape[0]
    cdef Py_ssize_t e, q
    with nogil:
        for e in range(E):
            for q in range(nq):
                _scatter_point(g, elem_dofs, table, e, q, w[e, q] * cw[q] * _eval(c, elem_dofs, table, e, q))
    return out


def nonlinear_load(a, b, long[:, ::1] elem_dofs, double[:, ::1] table, double[::1] cw, Py_ssize_t n):
    cdef double complex[::1] ca = np.ascontiguousarray(a, dtype=np.complex128)
    cdef double complex[::1] cb = np.ascontiguousarray(b, dtype=np.complex128)
    out = np.zeros(n, dtype=np.complex128)
    cdef double complex[::1] g = out
    cdef Py_ssize_t E = elem_dofs.shape[0], nq = table.shape[0]
    cdef Py_ssize_t e, q
    cdef double complex aq, bq
    cdef double abs_a, w, amax = 0.0
    with nogil:
        for e in range(E):
            for q in range(nq):
                aq = _eval(ca, elem_dofs, table, e, q)
                bq = _eval(cb, elem_dofs, table, e, q)
                abs_a = aq.real * aq.real + aq.imag * aq.imag
                if abs_a > amax:
                    amax = abs_a
                w = 0.5 * (abs_a + bq.real * bq.real + bq.imag * bq.imag)
                _scatter_point(g, elem_dofs, table, e, q, w * 0.5 * (aq + bq) * cw[q])
    return out, amax


def quartic_sum(a, long[:, ::1] elem_dofs, double[:, ::1] table, double[::1] cw):
    cdef double complex[::1] ca = np.ascontiguousarray(a, dtype=np.complex128)
    cdef Py_ssize_t E = elem_dofs.shape[0], nq = table.shape[0]
    cdef Py_ssize_t e, q
    cdef double complex aq
    cdef double d, total = 0.0
    with nogil:
        for e in range(E):
            for q in range(nq):
                aq = _eval(ca, elem_dofs, table, e, q)
                d = aq.real * aq.real + aq.imag * aq.imag
                total += d * d * cw[q]
    return total


cdef inline double _wrap(double d) noexcept nogil:
    d = d + M_PI
    d = d - 2.0 * M_PI * floor(d / (2.0 * M_PI))
    return d - M_PI


def plaquette_winding(phase):
    cdef double[:, ::1] p = np.ascontiguousarray(phase, dtype=np.float64)
    cdef Py_ssize_t ny = p.shape[0] - 1, nx = p.shape[1] - 1
    out = np.zeros((ny, nx), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef double t
    with nogil:
        for j in range(ny):
            for i in range(nx):
                t = (_wrap(p[j, i + 1] - p[j, i]) + _wrap(p[j + 1, i + 1] - p[j, i + 1])
                     + _wrap(p[j + 1, i] - p[j + 1, i + 1]) + _wrap(p[j, i] - p[j + 1, i]))
                o[j, i] = <cnp.int64_t> rint(t / (2.0 * M_PI))
    return out
