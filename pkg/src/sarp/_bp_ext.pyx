# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sum-product flooding for binary pairwise networks."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


def bp_flood(int n_nodes,
             cnp.int64_t[::1] src,
             cnp.int64_t[::1] dst,
             double[:, :, ::1] tables,
             double[:, ::1] unary,
             cnp.int64_t[::1] in_ptr,
             cnp.int64_t[::1] in_msg,
             int max_iter, double tol, double damping):
    cdef Py_ssize_t n_msg = src.shape[0]
    cdef Py_ssize_t d, k, it, s, t, rev, other
    cdef double p0, p1, q0, q1, z, delta, change
    cdef int iterations = 0
    cdef bint converged = False

    msgs_arr = np.full((n_msg, 2), 0.5)
    new_arr = np.empty((n_msg, 2))
    beliefs_arr = np.empty((n_nodes, 2))
    cdef double[:, ::1] msgs = msgs_arr
    cdef double[:, ::1] new = new_arr
    cdef double[:, ::1] beliefs = beliefs_arr

    for it in range(max_iter):
        for d in range(n_msg):
            s = src[d]
            t = dst[d]
            rev = d ^ 1
            p0 = unary[s, 0]
            p1 = unary[s, 1]
            for k in range(in_ptr[s], in_ptr[s + 1]):
                other = in_msg[k]
                if other != rev:
                    p0 *= msgs[other, 0]
                    p1 *= msgs[other, 1]
            q0 = p0 * tables[d, 0, 0] + p1 * tables[d, 1, 0]
            q1 = p0 * tables[d, 0, 1] + p1 * tables[d, 1, 1]
            z = q0 + q1
            if z > 0:
                new[d, 0] = q0 / z
                new[d, 1] = q1 / z
            else:
                new[d, 0] = 0.5
                new[d, 1] = 0.5
        change = 0.0
        for d in range(n_msg):
            for k in range(2):
                q0 = damping * msgs[d, k] + (1.0 - damping) * new[d, k]
                delta = fabs(q0 - msgs[d, k])
                if delta > change:
                    change = delta
                msgs[d, k] = q0
        iterations = it + 1
        if change < tol:
            converged = True
            break

    for s in range(n_nodes):
        p0 = unary[s, 0]
        p1 = unary[s, 1]
        for k in range(in_ptr[s], in_ptr[s + 1]):
            other = in_msg[k]
            p0 *= msgs[other, 0]
            p1 *= msgs[other, 1]
        z = p0 + p1
        if z > 0:
            beliefs[s, 0] = p0 / z
            beliefs[s, 1] = p1 / z
        else:
            beliefs[s, 0] = 0.5
            beliefs[s, 1] = 0.5
    return beliefs_arr, converged, iterations
