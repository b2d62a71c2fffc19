# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernel of the SOC barrier solver: per-Newton-step gradient
and Hessian assembly, and the barrier value used by the line search.  Must
stay numerically equivalent to the pure-numpy fallback in cfmimo.cone."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log

cnp.import_array()


def barrier_value(double[::1] z,
                  Py_ssize_t n, Py_ssize_t n_cones,
                  long long[::1] sup_ptr, long long[::1] sup_idx,
                  long long[::1] a_ptr, double[::1] a_flat,
                  long long[::1] row_ptr, double[::1] b_flat,
                  double[::1] c_flat, double[::1] d,
                  long long[::1] box_idx, double[::1] box_sign,
                  double[::1] box_rhs):
    """Returns (ok, sum of -log barrier terms)."""
    cdef double s = z[n]
    cdef double total = 0.0, w, r2, u, acc
    cdef Py_ssize_t i, r, j, p0, p1, a0, r0, r1, rows, sup, col
    for i in range(n_cones):
        p0 = sup_ptr[i]; p1 = sup_ptr[i + 1]; sup = p1 - p0
        r0 = row_ptr[i]; r1 = row_ptr[i + 1]; rows = r1 - r0
        a0 = a_ptr[i]
        w = d[i] + s
        for j in range(sup):
            w += c_flat[p0 + j] * z[sup_idx[p0 + j]]
        if w <= 0.0:
            return False, np.inf
        r2 = w * w
        for r in range(rows):
            u = b_flat[r0 + r]
            for j in range(sup):
                u += a_flat[a0 + r * sup + j] * z[sup_idx[p0 + j]]
            r2 -= u * u
        if r2 <= 0.0:
            return False, np.inf
        total -= log(r2)
    for j in range(box_idx.shape[0]):
        w = box_sign[j] * z[box_idx[j]] + box_rhs[j] + s
        if w <= 0.0:
            return False, np.inf
        total -= log(w)
    return True, total


def newton_system(double[::1] z,
                  Py_ssize_t n, Py_ssize_t n_cones,
                  long long[::1] sup_ptr, long long[::1] sup_idx,
                  long long[::1] a_ptr, double[::1] a_flat,
                  long long[::1] row_ptr, double[::1] b_flat,
                  double[::1] c_flat, double[::1] d,
                  long long[::1] box_idx, double[::1] box_sign,
                  double[::1] box_rhs,
                  double[::1] grad, double[:, ::1] hess):
    """Fill barrier gradient/Hessian at z; returns False off-domain."""
    cdef double s = z[n]
    cdef Py_ssize_t i, r, j, l, p0, p1, a0, r0, r1, rows, sup, gi, gj
    cdef double w, r2, uval, sign, inv, inv2, vs, scale
    cdef double[::1] u = np.empty(0)
    cdef double[::1] v = np.empty(0)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ubuf, vbuf, czbuf
    cdef double[::1] cz

    grad[:] = 0.0
    for i in range(n + 1):
        for j in range(n + 1):
            hess[i, j] = 0.0

    for i in range(n_cones):
        p0 = sup_ptr[i]; p1 = sup_ptr[i + 1]; sup = p1 - p0
        r0 = row_ptr[i]; r1 = row_ptr[i + 1]; rows = r1 - r0
        a0 = a_ptr[i]
        w = d[i] + s
        for j in range(sup):
            w += c_flat[p0 + j] * z[sup_idx[p0 + j]]
        if w <= 0.0:
            return False
        ubuf = np.empty(rows)
        u = ubuf
        r2 = w * w
        for r in range(rows):
            uval = b_flat[r0 + r]
            for j in range(sup):
                uval += a_flat[a0 + r * sup + j] * z[sup_idx[p0 + j]]
            u[r] = uval
            r2 -= uval * uval
        if r2 <= 0.0:
            return False
        inv = 1.0 / r2
        inv2 = inv * inv
        # v = grad of r2 over (support, s): 2 w cz - 2 A^T u
        vbuf = np.empty(sup + 1)
        v = vbuf
        for j in range(sup):
            vs = 2.0 * w * c_flat[p0 + j]
            for r in range(rows):
                vs -= 2.0 * a_flat[a0 + r * sup + j] * u[r]
            v[j] = vs
        v[sup] = 2.0 * w
        czbuf = np.empty(sup + 1)
        cz = czbuf
        for j in range(sup):
            cz[j] = c_flat[p0 + j]
        cz[sup] = 1.0
        for j in range(sup + 1):
            gi = sup_idx[p0 + j] if j < sup else n
            grad[gi] -= v[j] * inv
            for l in range(sup + 1):
                gj = sup_idx[p0 + l] if l < sup else n
                hess[gi, gj] += v[j] * v[l] * inv2 - 2.0 * cz[j] * cz[l] * inv
        # + (2/r2) A^T A in the x block
        scale = 2.0 * inv
        for j in range(sup):
            gi = sup_idx[p0 + j]
            for l in range(sup):
                gj = sup_idx[p0 + l]
                vs = 0.0
                for r in range(rows):
                    vs += a_flat[a0 + r * sup + j] * a_flat[a0 + r * sup + l]
                hess[gi, gj] += scale * vs
    for j in range(box_idx.shape[0]):
        gi = box_idx[j]
        sign = box_sign[j]
        w = sign * z[gi] + box_rhs[j] + s
        if w <= 0.0:
            return False
        inv = 1.0 / w
        grad[gi] -= sign * inv
        grad[n] -= inv
        inv2 = inv * inv
        hess[gi, gi] += inv2
        hess[gi, n] += sign * inv2
        hess[n, gi] += sign * inv2
        hess[n, n] += inv2
    return True
