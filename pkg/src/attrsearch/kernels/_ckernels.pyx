# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled distance/vote kernels; mirrors ``numpy_backend`` signatures."""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

NAME = "cython"


def dists_to_vec(double[:, ::1] reps, double[::1] vec):
    cdef Py_ssize_t n = reps.shape[0]
    cdef Py_ssize_t k = reps.shape[1]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i, j
    cdef double acc, d
    for i in range(n):
        acc = 0.0
        for j in range(k):
            d = reps[i, j] - vec[j]
            acc += d * d
        o[i] = sqrt(acc)
    return out


def dists_to_row(double[:, ::1] reps, Py_ssize_t row):
    return dists_to_vec(reps, reps[row])


def pooled_dists_to_row(double[:, :, ::1] reps_stack, Py_ssize_t row):
    cdef Py_ssize_t n_spaces = reps_stack.shape[0]
    cdef Py_ssize_t n = reps_stack.shape[1]
    cdef Py_ssize_t k = reps_stack.shape[2]
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t s, i, j
    cdef double acc, d
    for s in range(n_spaces):
        for i in range(n):
            acc = 0.0
            for j in range(k):
                d = reps_stack[s, i, j] - reps_stack[s, row, j]
                acc += d * d
            o[i] += sqrt(acc)
    for i in range(n):
        o[i] /= n_spaces
    return out


def count_satisfied(double[:, ::1] d_closer, double[:, ::1] d_farther):
    cdef Py_ssize_t m = d_closer.shape[0]
    cdef Py_ssize_t n = d_closer.shape[1]
    out = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] o = out
    cdef Py_ssize_t i, j
    for i in range(m):
        for j in range(n):
            # branchless: strict wins count, ties stay unsatisfied
            o[j] += d_closer[i, j] < d_farther[i, j]
    return out
