# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled histogram, split-scan and stump-search kernels.

Loop order matches :mod:`deepboost_af._kernels_py` exactly so both backends
produce bit-identical sums.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def build_histograms(const cnp.uint8_t[:, ::1] binned, const cnp.intp_t[::1] rows,
                     const double[::1] grad, const double[::1] hess, Py_ssize_t n_bins):
    cdef Py_ssize_t n_features = binned.shape[1]
    G_arr = np.zeros((n_features, n_bins), dtype=np.float64)
    H_arr = np.zeros((n_features, n_bins), dtype=np.float64)
    cdef double[:, ::1] G = G_arr
    cdef double[:, ::1] H = H_arr
    cdef Py_ssize_t i, f, r
    cdef double g, h
    cdef const cnp.uint8_t[::1] row
    with nogil:
        for i in range(rows.shape[0]):
            r = rows[i]
            g = grad[r]
            h = hess[r]
            row = binned[r]
            for f in range(n_features):
                G[f, row[f]] += g
                H[f, row[f]] += h
    return G_arr, H_arr


def find_best_split(const double[:, ::1] G, const double[:, ::1] H,
                    const cnp.intp_t[::1] n_bins, double lam, double gamma,
                    double min_child_weight):
    cdef Py_ssize_t n_features = G.shape[0]
    cdef Py_ssize_t f, b, nb
    cdef Py_ssize_t best_f = -1, best_b = -1
    cdef double best_gain = 0.0
    cdef double gt, ht, gl, hl, gr, hr, gain, parent
    with nogil:
        for f in range(n_features):
            nb = n_bins[f]
            if nb < 2:
                continue
            gt = 0.0
            ht = 0.0
            for b in range(nb):
                gt = gt + G[f, b]
                ht = ht + H[f, b]
            parent = gt * gt / (ht + lam)
            gl = 0.0
            hl = 0.0
            for b in range(nb - 1):
                gl = gl + G[f, b]
                hl = hl + H[f, b]
                gr = gt - gl
                hr = ht - hl
                if hl < min_child_weight or hr < min_child_weight:
                    continue
                gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent) - gamma
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_b = b
    return best_f, best_b, best_gain


def best_stump(const double[:, ::1] X, const cnp.intp_t[:, ::1] order,
               const double[::1] y, const double[::1] w):
    cdef Py_ssize_t n_features = order.shape[0]
    cdef Py_ssize_t n = order.shape[1]
    cdef Py_ssize_t f, i, a, nxt
    cdef double total = 0.0, total_neg = 0.0
    cdef double lp, ln, err_pos, err_neg, va, vb
    cdef Py_ssize_t best_f = -1
    cdef double best_thr = 0.0, best_err = 0.5
    cdef int best_pol = 1
    with nogil:
        for i in range(n):
            total = total + w[i]
            if y[i] < 0:
                total_neg = total_neg + w[i]
        best_err = 0.5 * total
        for f in range(n_features):
            lp = 0.0
            ln = 0.0
            for i in range(n - 1):
                a = order[f, i]
                nxt = order[f, i + 1]
                if y[a] > 0:
                    lp = lp + w[a]
                else:
                    ln = ln + w[a]
                va = X[a, f]
                vb = X[nxt, f]
                if va == vb:
                    continue
                # polarity +1 predicts +1 above the threshold
                err_pos = lp + (total_neg - ln)
                err_neg = total - err_pos
                if err_pos < best_err:
                    best_err = err_pos
                    best_f = f
                    best_thr = 0.5 * (va + vb)
                    best_pol = 1
                if err_neg < best_err:
                    best_err = err_neg
                    best_f = f
                    best_thr = 0.5 * (va + vb)
                    best_pol = -1
    return best_f, best_thr, best_pol, best_err / total
