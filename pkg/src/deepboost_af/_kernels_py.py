"""Numpy fallback for the compiled kernels in ``_kernels.pyx``.

Summation order mirrors the compiled loops (row order within a histogram
cell, bin order within a scan) so results agree bit for bit.
"""

import numpy as np


def build_histograms(binned, rows, grad, hess, n_bins):
    n_features = binned.shape[1]
    sub = binned[rows].astype(np.intp)
    sub += np.arange(n_features, dtype=np.intp) * n_bins
    flat = sub.ravel()
    size = n_features * n_bins
    g = np.broadcast_to(grad[rows][:, None], sub.shape).ravel()
    h = np.broadcast_to(hess[rows][:, None], sub.shape).ravel()
    G = np.bincount(flat, weights=g, minlength=size).reshape(n_features, n_bins)
    H = np.bincount(flat, weights=h, minlength=size).reshape(n_features, n_bins)
    return G, H


def find_best_split(G, H, n_bins, lam, gamma, min_child_weight):
    n_features, width = G.shape
    if n_features == 0 or width < 2:
        return -1, -1, 0.0
    n_bins = np.asarray(n_bins)
    valid_bin = np.arange(width)[None, :] < (n_bins[:, None])
    GL = np.cumsum(np.where(valid_bin, G, 0.0), axis=1)
    HL = np.cumsum(np.where(valid_bin, H, 0.0), axis=1)
    gt = GL[:, -1:]
    ht = HL[:, -1:]
    GR = gt - GL
    HR = ht - HL
    parent = gt * gt / (ht + lam)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent) - gamma
    ok = (np.arange(width)[None, :] < (n_bins[:, None] - 1))
    ok &= (HL >= min_child_weight) & (HR >= min_child_weight)
    gain = np.where(ok, gain, -np.inf)
    k = int(np.argmax(gain))
    best = gain.flat[k]
    if not best > 0.0:
        return -1, -1, 0.0
    f, b = divmod(k, width)
    return f, b, float(best)


def best_stump(X, order, y, w):
    n = order.shape[1]
    total = float(np.cumsum(w)[-1])
    neg_w = np.where(y < 0, w, 0.0)
    total_neg = float(np.cumsum(neg_w)[-1])
    pos_w = np.where(y > 0, w, 0.0)
    lp = np.cumsum(pos_w[order], axis=1)[:, :-1]
    ln = np.cumsum(neg_w[order], axis=1)[:, :-1]
    vals = np.take_along_axis(X.T, order, axis=1)
    distinct = vals[:, :-1] != vals[:, 1:]
    err_pos = lp + (total_neg - ln)
    err_neg = total - err_pos
    # interleave (pos, neg) per candidate so argmin's first hit follows the
    # compiled scan order: feature, then position, then polarity +1 first
    errs = np.stack([err_pos, err_neg], axis=-1)
    errs = np.where(distinct[..., None], errs, np.inf)
    best_err = 0.5 * total
    if errs.size:
        k = int(np.argmin(errs))
        if errs.flat[k] < best_err:
            f, rem = divmod(k, 2 * (n - 1))
            i, p = divmod(rem, 2)
            a, b = order[f, i], order[f, i + 1]
            thr = 0.5 * (X[a, f] + X[b, f])
            return f, thr, (1 if p == 0 else -1), float(errs.flat[k]) / total
    return -1, 0.0, 1, best_err / total
