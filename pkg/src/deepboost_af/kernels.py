"""Backend selection for the boosting hot loops.

The compiled extension is used when it imports; otherwise the numpy
fallback.  Set ``DEEPBOOST_AF_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    BACKENDS["cython"] = _compiled

if os.environ.get("DEEPBOOST_AF_PURE_PYTHON", "") not in ("", "0") or _compiled is None:
    BACKEND = "python"
else:
    BACKEND = "cython"

_impl = BACKENDS[BACKEND]


def get_backend(name=None):
    return BACKENDS[name or BACKEND]


def build_histograms(binned, rows, grad, hess, n_bins, backend=None):
    """Per-feature sums of gradients and hessians over ``rows``.

    Returns ``(G, H)``, each ``(n_features, n_bins)``.
    """
    return get_backend(backend).build_histograms(
        np.ascontiguousarray(binned, dtype=np.uint8),
        np.ascontiguousarray(rows, dtype=np.intp),
        np.ascontiguousarray(grad, dtype=np.float64),
        np.ascontiguousarray(hess, dtype=np.float64),
        int(n_bins),
    )


def find_best_split(G, H, n_bins, lam, gamma, min_child_weight, backend=None):
    """Best ``(feature, bin, gain)`` over all features; feature -1 when no cut gains."""
    f, b, gain = get_backend(backend).find_best_split(
        np.ascontiguousarray(G, dtype=np.float64),
        np.ascontiguousarray(H, dtype=np.float64),
        np.ascontiguousarray(n_bins, dtype=np.intp),
        float(lam), float(gamma), float(min_child_weight),
    )
    return int(f), int(b), float(gain)


def best_stump(X, order, y, w, backend=None):
    """Lowest weighted-error stump: ``(feature, threshold, polarity, error)``."""
    f, thr, pol, err = get_backend(backend).best_stump(
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(order, dtype=np.intp),
        np.ascontiguousarray(y, dtype=np.float64),
        np.ascontiguousarray(w, dtype=np.float64),
    )
    return int(f), float(thr), int(pol), float(err)
