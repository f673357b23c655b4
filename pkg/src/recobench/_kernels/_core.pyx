# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Fused contrastive-loss core (compiled backend).

Same contract as ``fallback.contrastive_core`` but with the per-anchor
softmax, loss, and gradient fused into one pass, avoiding the temporary
matrices the vectorized path allocates.  This is the hot inner loop of
training: one call per batch per step.
"""

import numpy as np

from libc.math cimport exp, log, INFINITY


def contrastive_core(logits, pos_mask, den_mask, bint add_excluded_positive):
    """Masked contrastive loss and gradient; see the fallback docstring."""
    logits = np.ascontiguousarray(logits, dtype=np.float64)
    pos_u8 = np.ascontiguousarray(pos_mask).view(np.uint8)
    den_u8 = np.ascontiguousarray(den_mask).view(np.uint8)

    cdef double[:, ::1] l = logits
    cdef const unsigned char[:, ::1] pos = pos_u8
    cdef const unsigned char[:, ::1] den = den_u8
    cdef Py_ssize_t a = l.shape[0], m = l.shape[1]

    per_arr = np.zeros(a, dtype=np.float64)
    grad_arr = np.zeros((a, m), dtype=np.float64)
    e_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] per = per_arr
    cdef double[:, ::1] grad = grad_arr
    cdef double[::1] e = e_arr

    cdef Py_ssize_t i, k
    cdef double shift, base, d, invsum, loss_i, total = 0.0

    with nogil:
        for i in range(a):
            shift = -INFINITY
            for k in range(m):
                if (pos[i, k] or den[i, k]) and l[i, k] > shift:
                    shift = l[i, k]
            if shift == -INFINITY:
                continue  # no candidates at all; row contributes nothing
            base = 0.0
            for k in range(m):
                if pos[i, k] or den[i, k]:
                    e[k] = exp(l[i, k] - shift)
                else:
                    e[k] = 0.0
                if den[i, k]:
                    base += e[k]
            loss_i = 0.0
            invsum = 0.0
            for k in range(m):
                if pos[i, k]:
                    if add_excluded_positive and not den[i, k]:
                        d = base + e[k]
                        grad[i, k] += e[k] / d
                    else:
                        d = base
                    loss_i += -(l[i, k] - shift) + log(d)
                    invsum += 1.0 / d
                    grad[i, k] -= 1.0
            for k in range(m):
                if den[i, k]:
                    grad[i, k] += e[k] * invsum
            per[i] = loss_i
            total += loss_i

    return total, per_arr, grad_arr
