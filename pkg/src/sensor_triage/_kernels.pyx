# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-sample kernels: gap filling and the send-on-delta filter."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


def forward_fill(const double[:, :] x, const cnp.npy_bool[:, :] mask):
    cdef Py_ssize_t T = x.shape[0], d = x.shape[1], t, j
    cdef double held
    out = np.empty((T, d), dtype=np.float64)
    cdef double[:, :] o = out
    for j in range(d):
        t = 0
        while t < T and not mask[t, j]:
            t += 1
        held = x[t, j]
        for t in range(T):
            if mask[t, j]:
                held = x[t, j]
            o[t, j] = held
    return out


def linear_fill(const double[:, :] x, const cnp.npy_bool[:, :] mask):
    cdef Py_ssize_t T = x.shape[0], d = x.shape[1], t, j, prev, nxt
    cdef double slope
    out = np.empty((T, d), dtype=np.float64)
    cdef double[:, :] o = out
    for j in range(d):
        prev = -1
        t = 0
        while t < T:
            if mask[t, j]:
                o[t, j] = x[t, j]
                prev = t
                t += 1
                continue
            nxt = t + 1
            while nxt < T and not mask[nxt, j]:
                nxt += 1
            if prev < 0:
                for t in range(t, nxt):
                    o[t, j] = x[nxt, j]
                t = nxt
            elif nxt >= T:
                for t in range(t, T):
                    o[t, j] = x[prev, j]
                t = T
            else:
                # same expression order as np.interp for bitwise parity
                slope = (x[nxt, j] - x[prev, j]) / <double>(nxt - prev)
                for t in range(t, nxt):
                    o[t, j] = slope * <double>(t - prev) + x[prev, j]
                t = nxt
    return out


def send_on_delta(const double[:, :] x, const double[:] delta,
                  const cnp.npy_bool[:, :] candidates):
    cdef Py_ssize_t T = x.shape[0], d = x.shape[1], t, j
    cdef double last
    keep = np.zeros((T, d), dtype=bool)
    if T == 0:
        return keep
    cdef cnp.npy_bool[:, :] k = keep
    for j in range(d):
        k[0, j] = 1
        last = x[0, j]
        for t in range(1, T):
            if candidates[t, j] and fabs(x[t, j] - last) > delta[j]:
                k[t, j] = 1
                last = x[t, j]
    return keep
