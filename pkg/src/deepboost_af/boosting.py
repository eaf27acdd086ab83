"""Boosted ensembles over dense feature matrices.

Two families share this module:

* discrete AdaBoost over decision stumps;
* a histogram gradient-boosted tree engine with a logistic objective and
  two growth policies, ``level`` (depth-wise, XGBoost-like) and ``leaf``
  (best-first, LightGBM-like).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import CorruptFile, DegenerateInput, EmptyMatrix, NonFiniteScore, SingleClassInput

EPS_MIN = 1e-10
# weighted errors this close to 1/2 are treated as chance level
CHANCE_TOL = 1e-12
MAX_BINS = 256


# ---------------------------------------------------------------------------
# AdaBoost


@dataclass
class Stump:
    feature_index: int
    threshold: float
    polarity: int
    alpha: float

    def predict(self, X):
        X = np.atleast_2d(X)
        return np.where(X[:, self.feature_index] > self.threshold, self.polarity, -self.polarity)


def stump_alpha(error: float) -> float:
    """Vote weight of a stump with weighted error ``error``.

    Zero at or above chance; a perfect stump is capped at the weight of
    an error of ``EPS_MIN``.
    """
    if error >= 0.5 - CHANCE_TOL:
        return 0.0
    error = max(error, EPS_MIN)
    return 0.5 * math.log((1.0 - error) / error)


def _check_binary(y, values):
    y = np.asarray(y)
    present = set(np.unique(y).tolist())
    if not present <= set(values):
        raise ValueError(f"labels must be in {values}, got {sorted(present)}")
    if len(present) < 2:
        raise SingleClassInput(f"training labels contain a single class {sorted(present)}")
    return y


def adaboost_train(X, y, rounds: int = 50, on_round=None, backend=None) -> "BoostEnsemble":
    """Discrete two-class AdaBoost; ``y`` in {-1, +1}.

    ``on_round(m, stump, error, weights)`` is called after each accepted
    round with the renormalized sample weights.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DegenerateInput("AdaBoost needs at least two samples")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    y = _check_binary(y, (-1, 1)).astype(np.float64)
    n = X.shape[0]
    order = np.argsort(X, axis=0, kind="stable").T.copy()
    w = np.full(n, 1.0 / n)
    stumps = []
    stop = "rounds"
    for m in range(rounds):
        f, thr, pol, err = kernels.best_stump(X, order, y, w, backend=backend)
        if f < 0 or err >= 0.5 - CHANCE_TOL:
            stop = "chance"
            break
        alpha = stump_alpha(err)
        stump = Stump(f, thr, pol, alpha)
        stumps.append(stump)
        w = w * np.exp(-alpha * y * stump.predict(X))
        w /= w.sum()
        if on_round is not None:
            on_round(m, stump, err, w)
        if err <= 0.0:
            stop = "perfect"
            break
    if not stumps:
        raise DegenerateInput("no stump does better than chance")
    return BoostEnsemble("adaboost", stumps, 0.0, None,
                         {"rounds": rounds, "stopped": stop})


def adaboost_decision(ens: "BoostEnsemble", X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    score = np.zeros(X.shape[0])
    for s in ens.members:
        score += s.alpha * s.predict(X)
    return score


def adaboost_predict(ens: "BoostEnsemble", x):
    """``(score, label)`` for one feature vector; a zero score votes +1."""
    score = float(adaboost_decision(ens, x)[0])
    return score, (1 if score >= 0 else -1)


# ---------------------------------------------------------------------------
# histogram binning


@dataclass
class HistogramBinning:
    cuts: list[np.ndarray]
    max_bins: int = 255

    @property
    def n_bins(self) -> np.ndarray:
        return np.array([len(c) + 1 for c in self.cuts], dtype=np.intp)

    def transform(self, X) -> np.ndarray:
        """Bin index per value: the number of cut points strictly below it."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != len(self.cuts):
            raise ValueError(f"expected {len(self.cuts)} features, got {X.shape[1]}")
        out = np.empty(X.shape, dtype=np.uint8)
        for f, c in enumerate(self.cuts):
            out[:, f] = np.searchsorted(c, X[:, f], side="left")
        return out


def _feature_cuts(col, k):
    vals, counts = np.unique(col, return_counts=True)
    if vals.size <= 1:
        return np.empty(0)
    mids = 0.5 * (vals[:-1] + vals[1:])
    if vals.size <= k:
        return mids
    cum = np.cumsum(counts)
    targets = np.arange(1, k) * (col.size / k)
    j = np.searchsorted(cum, targets, side="left")
    j = np.unique(j[j < vals.size - 1])
    return mids[j]


def build_binning(X, k: int = 255) -> HistogramBinning:
    """Equal-frequency cut points per feature, at most ``k`` bins each.

    Features with at most ``k`` distinct values get one bin per value, so
    the histogram search sees every distinct threshold.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.size == 0:
        raise EmptyMatrix("binning needs a non-empty 2-D matrix")
    if not 2 <= k <= MAX_BINS:
        raise ValueError(f"k must lie in [2, {MAX_BINS}]")
    return HistogramBinning([_feature_cuts(X[:, f], k) for f in range(X.shape[1])], k)


# ---------------------------------------------------------------------------
# gradient boosting


def sigmoid(f):
    f = np.asarray(f, dtype=np.float64)
    return np.where(f >= 0, 1.0 / (1.0 + np.exp(-np.abs(f))), np.exp(-np.abs(f)) / (1.0 + np.exp(-np.abs(f))))


def logistic_grad_hess(f, y):
    """Gradient and hessian of the log-loss with respect to the raw score."""
    p = sigmoid(f)
    return p - y, p * (1.0 - p)


def split_gain(GL, HL, GR, HR, lam, gamma):
    G, H = GL + GR, HL + HR
    return 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - G * G / (H + lam)) - gamma


def best_split(G, H, lam: float = 1.0, gamma: float = 0.0, min_child_weight: float = 1.0,
               backend=None):
    """Best cut of one feature's histogram.

    Returns ``(bin, gain)`` where the left child holds bins ``<= bin``, or
    None when no admissible cut has positive gain.
    """
    G = np.asarray(G, dtype=np.float64)[None, :]
    H = np.asarray(H, dtype=np.float64)[None, :]
    f, b, gain = kernels.find_best_split(G, H, [G.shape[1]], lam, gamma, min_child_weight,
                                         backend=backend)
    if f < 0:
        return None
    return b, gain


@dataclass
class GBDTParams:
    trees: int = 100
    learning_rate: float = 0.1
    growth: str = "leaf"
    max_depth: int | None = None
    max_leaves: int | None = None
    lam: float = 1.0
    gamma: float = 0.0
    min_child_weight: float = 1.0
    n_bins: int = 255

    def __post_init__(self):
        if self.growth not in ("level", "leaf"):
            raise ValueError(f"unknown growth policy {self.growth!r}")
        if self.growth == "level" and self.max_depth is None:
            self.max_depth = 6
        if self.growth == "leaf" and self.max_leaves is None:
            self.max_leaves = 31
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.trees < 0 or self.learning_rate <= 0:
            raise ValueError("trees >= 0 and learning_rate > 0 required")


@dataclass
class Tree:
    growth: str
    feature: list = field(default_factory=list)
    threshold_bin: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    value: list = field(default_factory=list)
    gain: list = field(default_factory=list)

    def add_leaf(self, value=0.0):
        self.feature.append(-1)
        self.threshold_bin.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(float(value))
        self.gain.append(0.0)
        return len(self.value) - 1

    @property
    def n_leaves(self):
        return sum(1 for f in self.feature if f < 0)

    def predict(self, X):
        X = np.atleast_2d(X)
        node = np.zeros(X.shape[0], dtype=np.intp)
        feature = np.array(self.feature)
        thr = np.array(self.threshold)
        left, right = np.array(self.left), np.array(self.right)
        active = feature[node] >= 0
        while active.any():
            i = np.flatnonzero(active)
            n = node[i]
            go_left = X[i, feature[n]] <= thr[n]
            node[i] = np.where(go_left, left[n], right[n])
            active = feature[node] >= 0
        return np.array(self.value)[node]

    def depth(self):
        def d(i):
            return 0 if self.feature[i] < 0 else 1 + max(d(self.left[i]), d(self.right[i]))
        return d(0) if self.value else 0


class _Node:
    __slots__ = ("id", "rows", "G", "H", "g", "h", "depth", "split")

    def __init__(self, id, rows, G, H, depth):
        self.id, self.rows, self.G, self.H, self.depth = id, rows, G, H, depth
        # node totals are read off feature 0's histogram so they match the scan
        self.g = float(np.cumsum(G[0])[-1]) if G.shape[0] else 0.0
        self.h = float(np.cumsum(H[0])[-1]) if H.shape[0] else 0.0
        self.split = None


class _Grower:
    def __init__(self, binned, binning, grad, hess, params, backend=None):
        self.binned = binned
        self.binning = binning
        self.n_bins = binning.n_bins
        self.width = int(self.n_bins.max()) if self.n_bins.size else 1
        self.grad, self.hess = grad, hess
        self.p = params
        self.backend = backend

    def _hist(self, rows):
        return kernels.build_histograms(self.binned, rows, self.grad, self.hess, self.width,
                                        backend=self.backend)

    def _evaluate(self, node):
        p = self.p
        if p.max_depth is not None and node.depth >= p.max_depth:
            return
        f, b, gain = kernels.find_best_split(node.G, node.H, self.n_bins, p.lam, p.gamma,
                                             p.min_child_weight, backend=self.backend)
        if f >= 0:
            node.split = (f, b, gain)

    def _split(self, tree, node):
        f, b, gain = node.split
        mask = self.binned[node.rows, f] <= b
        lrows, rrows = node.rows[mask], node.rows[~mask]
        # build the smaller child, derive the larger by subtraction
        if lrows.size <= rrows.size:
            LG, LH = self._hist(lrows)
            RG, RH = node.G - LG, node.H - LH
        else:
            RG, RH = self._hist(rrows)
            LG, LH = node.G - RG, node.H - RH
        li, ri = tree.add_leaf(), tree.add_leaf()
        tree.feature[node.id] = f
        tree.threshold_bin[node.id] = b
        tree.threshold[node.id] = float(self.binning.cuts[f][b])
        tree.gain[node.id] = gain
        tree.left[node.id], tree.right[node.id] = li, ri
        kids = (_Node(li, lrows, LG, LH, node.depth + 1), _Node(ri, rrows, RG, RH, node.depth + 1))
        for k in kids:
            self._evaluate(k)
        return kids

    def grow(self, rows):
        tree = Tree(self.p.growth)
        G, H = self._hist(rows)
        root = _Node(tree.add_leaf(), rows, G, H, 0)
        self._evaluate(root)
        if self.p.growth == "level":
            leaves = self._grow_level(tree, root)
        else:
            leaves = self._grow_leaf(tree, root)
        for leaf in leaves:
            tree.value[leaf.id] = -leaf.g / (leaf.h + self.p.lam)
        return tree, leaves

    def _grow_level(self, tree, root):
        frontier, leaves = [root], []
        while frontier:
            nxt = []
            for node in frontier:
                if node.split is None:
                    leaves.append(node)
                else:
                    nxt.extend(self._split(tree, node))
            frontier = nxt
        return leaves

    def _grow_leaf(self, tree, root):
        leaves = [root]
        while len(leaves) < self.p.max_leaves:
            cands = [n for n in leaves if n.split is not None]
            if not cands:
                break
            # highest gain first; equal gains go to the earliest-created leaf
            best = max(cands, key=lambda n: (n.split[2], -n.id))
            leaves.remove(best)
            leaves.extend(self._split(tree, best))
        return sorted(leaves, key=lambda n: n.id)


def log_loss(y, f):
    f = np.asarray(f, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, f) - y * f))


def gbdt_train(X, y, params: GBDTParams | None = None, binning: HistogramBinning | None = None,
               on_round=None, backend=None) -> "BoostEnsemble":
    """Fit a logistic gradient-boosted tree ensemble; ``y`` in {0, 1}.

    ``on_round(m, tree, raw_scores)`` sees the training raw scores after
    each tree is added.
    """
    params = params or GBDTParams()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DegenerateInput("gradient boosting needs at least two samples")
    y = _check_binary(y, (0, 1)).astype(np.float64)
    binning = binning or build_binning(X, params.n_bins)
    binned = binning.transform(X)
    prevalence = y.mean()
    base = math.log(prevalence / (1.0 - prevalence))
    raw = np.full(X.shape[0], base)
    rows = np.arange(X.shape[0], dtype=np.intp)
    trees = []
    for m in range(params.trees):
        g, h = logistic_grad_hess(raw, y)
        tree, leaves = _Grower(binned, binning, g, h, params, backend).grow(rows)
        for leaf in leaves:
            raw[leaf.rows] += params.learning_rate * tree.value[leaf.id]
        if not np.all(np.isfinite(raw)):
            raise NonFiniteScore(f"non-finite raw score after tree {m}")
        trees.append(tree)
        if on_round is not None:
            on_round(m, tree, raw)
    hyper = asdict(params)
    return BoostEnsemble("gbdt", trees, base, binning, hyper)


def gbdt_raw_score(ens: "BoostEnsemble", X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    lr = ens.hyperparameters["learning_rate"]
    total = np.zeros(X.shape[0])
    for t in ens.members:
        total += t.predict(X)
    return ens.base_score + lr * total


def gbdt_predict_proba(ens: "BoostEnsemble", X) -> np.ndarray:
    return sigmoid(gbdt_raw_score(ens, X))


def gbdt_predict(ens: "BoostEnsemble", x):
    """``(probability, label)`` for one feature vector."""
    p = float(gbdt_predict_proba(ens, x)[0])
    return p, int(p >= 0.5)


# ---------------------------------------------------------------------------
# ensembles and persistence


@dataclass
class BoostEnsemble:
    kind: str
    members: list
    base_score: float
    binning: HistogramBinning | None
    hyperparameters: dict

    def predict_labels(self, X) -> np.ndarray:
        """0/1 labels for a matrix of feature vectors."""
        if self.kind == "adaboost":
            return (adaboost_decision(self, X) >= 0).astype(int)
        return (gbdt_predict_proba(self, X) >= 0.5).astype(int)

    def to_json(self) -> str:
        doc = {"kind": self.kind, "hyperparameters": self.hyperparameters,
               "base_score": self.base_score}
        if self.kind == "adaboost":
            doc["binning"] = None
            doc["stumps"] = [asdict(s) for s in self.members]
        else:
            doc["binning"] = {"max_bins": self.binning.max_bins,
                              "cuts": [c.tolist() for c in self.binning.cuts]}
            doc["trees"] = [asdict(t) for t in self.members]
        return json.dumps(doc, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "BoostEnsemble":
        try:
            doc = json.loads(text)
            kind = doc["kind"]
            if kind == "adaboost":
                members = [Stump(**s) for s in doc["stumps"]]
                binning = None
            elif kind == "gbdt":
                members = [Tree(**t) for t in doc["trees"]]
                b = doc["binning"]
                binning = HistogramBinning([np.array(c, dtype=np.float64) for c in b["cuts"]],
                                           b["max_bins"])
            else:
                raise CorruptFile(f"unknown ensemble kind {kind!r}")
            return cls(kind, members, doc["base_score"], binning, doc["hyperparameters"])
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise CorruptFile(f"malformed ensemble file: {exc}") from None


def save_ensemble(ens: BoostEnsemble, path) -> None:
    Path(path).write_text(ens.to_json(), encoding="utf-8")


def load_ensemble(path) -> BoostEnsemble:
    return BoostEnsemble.from_json(Path(path).read_text(encoding="utf-8"))
