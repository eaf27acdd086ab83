"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Runtime limits are asserted alongside the functional checks.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from deepboost_af import boosting as B
from deepboost_af import cli, dcae, metrics, preprocess, signal_io
from deepboost_af import neural as nn
from deepboost_af.errors import ConstantSignal, LengthMismatch, UndefinedMetric
from deepboost_af.synthetic import make_records
from oracles import central_difference, exhaustive_split, max_rel_error

TABLE_SHAPES = [  # input row first, then the 19 layers
    (9000, 1), (9000, 32), (9000, 32), (4500, 32), (4500, 16), (4500, 16), (2250, 16),
    (2250, 16), (2250, 16), (1125, 16), (1125, 16), (1125, 16), (2250, 16), (2250, 16),
    (2250, 16), (4500, 16), (4500, 32), (4500, 32), (9000, 32), (9000, 1),
]
TABLE_PARAMS = [96, 128, 0, 1536, 64, 0, 768, 64, 0, 768, 64, 0, 768, 64, 0, 1536, 128, 0, 32]
PUBLISHED_ROWS = [  # (sensitivity, precision, printed F1)
    (0.9905, 0.9091, 0.9481), (0.9935, 0.9098, 0.9498), (0.9991, 0.9084, 0.9516),
    (0.9999, 0.9085, 0.9520), (0.9999, 0.9085, 0.9520), (0.9999, 0.9085, 0.9520),
]


@pytest.fixture
def verdict(capsys):
    """Print one PASS/FAIL line for a criterion, then fail the test if needed."""
    def report(number, title, checks, elapsed, limit):
        failed = [name for name, ok in checks if not ok]
        if elapsed >= limit:
            failed.append(f"runtime {elapsed:.1f}s >= {limit}s")
        status = "PASS" if not failed else "FAIL"
        detail = f"{elapsed:.2f}s" + ("" if not failed else "; failed: " + ", ".join(failed))
        with capsys.disabled():
            print(f"\n[acceptance] criterion {number} {status}: {title} ({detail})")
        assert not failed, failed
    return report


def _raises(exc, fn, *args):
    try:
        fn(*args)
    except exc:
        return True
    return False


def test_criterion_1_architecture(verdict):
    t0 = time.perf_counter()
    m = dcae.build_dcae(0)
    checks = [
        ("19 layers", len(m.layers) == 19),
        ("output shapes", m.shapes() == TABLE_SHAPES),
        ("parameter counts", m.parameter_counts() == TABLE_PARAMS),
        ("total 6016", sum(m.parameter_counts()) == 6016),
    ]
    verdict(1, "layer table conformance", checks, time.perf_counter() - t0, 1.0)


def _layer_gradient_errors(rng):
    errs = {}
    x = rng.normal(size=(2, 10, 3))
    k = rng.normal(size=(3, 3, 4))
    proj = rng.normal(size=(2, 10, 4))
    gx, gk = nn.conv1d_backward(x, k, proj)
    f = lambda: float(np.sum(nn.conv1d_forward(x, k) * proj))
    errs["conv"] = max(max_rel_error(gx, central_difference(f, x)),
                       max_rel_error(gk, central_difference(f, k)))

    for mode in ("train", "infer"):
        xb = rng.normal(size=(3, 6, 2)) * 2 + 1
        gamma, beta = rng.normal(size=2), rng.normal(size=2)
        proj = rng.normal(size=xb.shape)
        rm, rv = np.zeros(2), np.ones(2)

        def f():
            y, _ = nn.batchnorm_forward(xb, gamma, beta, rm.copy(), rv.copy(), mode)
            return float(np.sum(y * proj))
        _, cache = nn.batchnorm_forward(xb, gamma, beta, rm.copy(), rv.copy(), mode)
        gx, gg, gb = nn.batchnorm_backward(cache, proj)
        errs[f"bn-{mode}"] = max(max_rel_error(gx, central_difference(f, xb)),
                                 max_rel_error(gg, central_difference(f, gamma)),
                                 max_rel_error(gb, central_difference(f, beta)))

    xp = rng.normal(size=(2, 9, 3))  # continuous draws, so no max-pool ties
    proj = rng.normal(size=(2, 5, 3))
    _, arg = nn.maxpool1d_forward(xp)
    f = lambda: float(np.sum(nn.maxpool1d_forward(xp)[0] * proj))
    errs["maxpool"] = max_rel_error(nn.maxpool1d_backward(arg, proj, 9), central_difference(f, xp))

    xu = rng.normal(size=(5, 2))
    proj = rng.normal(size=(10, 2))
    f = lambda: float(np.sum(nn.upsample1d_forward(xu) * proj))
    errs["upsample"] = max_rel_error(nn.upsample1d_backward(proj), central_difference(f, xu))

    xd, w = rng.normal(size=(7, 4)), rng.normal(size=(4, 1))
    proj = rng.normal(size=(7, 1))
    gx, gw = nn.dense_backward(xd, w, proj)
    f = lambda: float(np.sum(nn.dense_forward(xd, w) * proj))
    errs["dense"] = max(max_rel_error(gx, central_difference(f, xd)),
                        max_rel_error(gw, central_difference(f, w)))

    xa = rng.normal(size=(6, 3))
    xa[np.abs(xa) < 1e-3] = 0.5
    proj = rng.normal(size=xa.shape)
    for kind in ("relu", "sigmoid"):
        f = lambda: float(np.sum(nn.activation(xa, kind) * proj))
        errs[kind] = max_rel_error(nn.activation_backward(xa, proj, kind), central_difference(f, xa))
    return errs


def _network_gradient_error(seed):
    rng = np.random.default_rng(seed)
    m = dcae.build_dcae(seed, input_length=64, wide=4, narrow=2, dtype=np.float64)
    for k in m.params:
        if k.endswith("gamma"):
            m.params[k][:] = 1 + 0.5 * rng.normal(size=m.params[k].shape)
        elif k.endswith("beta"):
            m.params[k][:] = 0.5 * rng.normal(size=m.params[k].shape)
    x = rng.random((2, 64))
    _, grads = dcae.loss_and_grads(m, x)

    def f():
        saved = {k: v.copy() for k, v in m.buffers.items()}
        loss, _ = dcae.loss_and_grads(m, x)
        for k, v in saved.items():
            m.buffers[k][:] = v
        return loss
    return max(max_rel_error(grads[n], central_difference(f, m.params[n])) for n in m.params)


def test_criterion_2_gradients(verdict):
    t0 = time.perf_counter()
    layer = _layer_gradient_errors(np.random.default_rng(11))
    net = max(_network_gradient_error(s) for s in (0, 1, 2))
    checks = [(f"{k} <= 1e-5 (got {v:.1e})", v <= 1e-5) for k, v in layer.items()]
    checks.append((f"network <= 1e-4 (got {net:.1e})", net <= 1e-4))
    verdict(2, "finite-difference gradient suite", checks, time.perf_counter() - t0, 60.0)


def test_criterion_3_unit_examples(verdict):
    t0 = time.perf_counter()
    mm = preprocess.min_max_normalize
    cm = metrics.ConfusionMatrix(tp=2, fp=1, tn=3, fn=0)
    r = metrics.compute_metrics(cm)
    checks = [
        ("normalize [0,5,10]", mm(np.array([0.0, 5, 10])).tolist() == [0, 0.5, 1]),
        ("normalize [2,4]", mm(np.array([2.0, 4])).tolist() == [0, 1]),
        ("constant signal", _raises(ConstantSignal, mm, np.array([-3.0, -3, -3]))),
        ("fit length pad", preprocess.fit_length(np.array([0.2, 0.8]), 4).tolist() == [0.2, 0.8, 0, 0]),
        ("fit length truncate", np.array_equal(preprocess.fit_length(np.arange(18300.0), 9000),
                                               np.arange(9000.0))),
        ("mse 0.5", dcae.mse(np.array([1.0, 0]), np.array([0.0, 0])) == 0.5),
        ("mse identity", dcae.mse(np.array([0.3, 0.7]), np.array([0.3, 0.7])) == 0.0),
        ("mse 5/3", abs(dcae.mse(np.array([1.0, 2, 3]), np.array([1.0, 1, 1])) - 5 / 3) < 1e-15),
        ("mse length", _raises(LengthMismatch, dcae.mse, np.zeros(2), np.zeros(3))),
        ("counts", metrics.accumulate([1, 1, 0], [1, 0, 0]) == metrics.ConfusionMatrix(1, 1, 1, 0)),
        ("accuracy 5/6", abs(r.accuracy - 5 / 6) < 1e-15),
        ("sensitivity 1", r.sensitivity == 1.0),
        ("precision 2/3", abs(r.precision - 2 / 3) < 1e-15),
        ("f1 0.8", abs(r.f1 - 0.8) < 1e-15),
        ("undefined metric", _raises(UndefinedMetric, metrics.compute_metrics, metrics.ConfusionMatrix())),
        ("hms 244", metrics.format_hms(244) == "0:04:04"),
        ("hms 7340", metrics.format_hms(7340) == "2:02:20"),
    ]
    verdict(3, "normalization, reconstruction error and metric examples", checks,
            time.perf_counter() - t0, 5.0)


def test_criterion_4_published_f1(verdict):
    t0 = time.perf_counter()
    checks = [(f"F1({p}, {s}) = {f1}", abs(metrics.f1_score(p, s) - f1) <= 1e-4)
              for s, p, f1 in PUBLISHED_ROWS]
    verdict(4, "published table F1 consistency", checks, time.perf_counter() - t0, 1.0)


def test_criterion_5_gbdt_oracle(verdict):
    t0 = time.perf_counter()
    checks = []
    for seed in range(50):
        rng = np.random.default_rng(5000 + seed)
        n = 2 * int(rng.integers(2, 33))
        F = int(rng.integers(1, 5))
        X = rng.integers(0, 16, size=(n, F)).astype(float) / 8.0
        y = np.zeros(n)
        y[rng.permutation(n)[: n // 2]] = 1
        g, h = B.logistic_grad_hess(np.zeros(n), y)
        ens = B.gbdt_train(X, y, B.GBDTParams(trees=1, growth="level", max_depth=1, n_bins=255))
        t = ens.members[0]
        ours = None if t.n_leaves == 1 else (t.feature[0], t.threshold[0], t.gain[0])
        checks.append((f"instance {seed}", ours == exhaustive_split(X, g, h, 1.0, 0.0, 1.0)))
    verdict(5, "histogram split equals exhaustive search on 50 instances", checks,
            time.perf_counter() - t0, 10.0)


def test_criterion_6_adaboost(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    X = rng.normal(size=(60, 4))
    y = np.where(X[:, 1] - 0.3 * X[:, 2] + 0.6 * rng.normal(size=60) > 0, 1, -1)
    sums = []
    B.adaboost_train(X, y, rounds=25, on_round=lambda m, s, e, w: sums.append(w.sum()))

    Xs = np.array([[0.0, 3.0], [1.0, 1.0], [2.0, 2.0], [3.0, 0.0], [4.0, 5.0], [5.0, 4.0]])
    ys = np.array([-1, -1, -1, 1, 1, 1])
    rounds = []
    sep = B.adaboost_train(Xs, ys, rounds=10, on_round=lambda m, s, e, w: rounds.append(m))
    train_err = float(np.mean(np.sign(B.adaboost_decision(sep, Xs) + 0.0) != ys))

    Xc = np.array([[0.0]] * 4 + [[1.0]] * 4)
    yc = np.array([-1, -1, -1, 1, 1, 1, 1, -1])
    chance = B.adaboost_train(Xc, yc, rounds=10)
    checks = [
        ("weights sum to 1", all(abs(s - 1.0) <= 1e-12 for s in sums) and len(sums) > 0),
        ("separable: zero training error", train_err == 0.0),
        ("separable: within 10 rounds", len(rounds) <= 10),
        ("chance stump stops training", chance.hyperparameters["stopped"] == "chance"
         and len(chance.members) == 1),
        ("alpha(0.25)", abs(B.stump_alpha(0.25) - 0.5 * math.log(3)) < 1e-12),
    ]
    verdict(6, "AdaBoost weight, separability and early-stop laws", checks,
            time.perf_counter() - t0, 5.0)


def test_criterion_7_dcae_overfit(verdict):
    t0 = time.perf_counter()
    records, _ = make_records(8, seed=7)
    signals = np.stack([preprocess.to_signal(r.samples.astype(np.float64), 9000, r.id)
                        for r in records]).astype(np.float32)
    model = dcae.build_dcae(0)
    config = dcae.OptimizerConfig(batch_size=2, epochs=200)
    model, log = dcae.train_dcae(model, signals, config, seed=0)
    held_in = dcae.mse(signals, dcae.forward(model, signals))
    checks = [(f"held-in MSE < 0.01 (got {held_in:.5f})", held_in < 0.01),
              ("200 epochs logged", len(log) == 200)]
    verdict(7, "autoencoder overfits 8 signals", checks, time.perf_counter() - t0, 300.0)


def _run_all(root: Path):
    assert cli.main(["synth", "--out", str(root / "records"), "--n", "200", "--seed", "1"]) == 0
    cfg = {
        "records_dir": "records", "labels": "records/REFERENCE.csv",
        "cache": "cache.dbaf", "output_dir": "out", "split_seed": 11,
        "dcae": {"seed": 3, "epochs": 6, "batch_size": 16, "feature_mode": "reduce"},
        "boosters": {"adaboost": {}, "gbdt-level": {}, "gbdt-leaf": {}},
    }
    (root / "config.json").write_text(json.dumps(cfg))
    return cli.main(["run-all", "--config", str(root / "config.json")])


def _artifacts(root: Path):
    out = root / "out"
    files = {"cache": (root / "cache.dbaf").read_bytes(),
             "model": (out / "dcae.model").read_bytes(),
             "features": (out / "features_reduce.csv").read_bytes(),
             "loss": (out / "dcae_loss.csv").read_bytes()}
    for p in sorted((out / "ensembles").glob("*.json")):
        if not p.name.endswith(".train.json"):
            files[p.name] = p.read_bytes()
    # training time is wall-clock, so it is left out of the comparison
    rows = [line.rsplit(",", 1)[0] for line in (out / "report.csv").read_text().splitlines()]
    return files, rows


@pytest.mark.slow
def test_criterion_8_end_to_end(verdict, tmp_path):
    t0 = time.perf_counter()
    codes = [_run_all(tmp_path / "a"), _run_all(tmp_path / "b")]
    fa, ra = _artifacts(tmp_path / "a")
    fb, rb = _artifacts(tmp_path / "b")
    d_lgb = next(r for r in ra if r.startswith("D-LGB,")).split(",")
    f1 = float(d_lgb[4])
    checks = [
        ("exit codes 0", codes == [0, 0]),
        ("six report rows", len(ra) == 7),
        (f"D-LGB F1 >= 0.90 (got {f1:.4f})", f1 >= 0.90),
        ("artifacts byte-identical", fa == fb and len(fa) == 10),
        ("report rows identical", ra == rb),
    ]
    verdict(8, "synthetic end-to-end run, twice", checks, time.perf_counter() - t0, 600.0)


def test_criterion_9_round_trips(verdict, tmp_path):
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    model = dcae.build_dcae(4)
    dcae.save_model(model, tmp_path / "m1")
    back = dcae.load_model(tmp_path / "m1")
    dcae.save_model(back, tmp_path / "m2")
    same_tensors = all(np.array_equal(model.params[k], back.params[k]) for k in model.params) and \
        all(np.array_equal(model.buffers[k], back.buffers[k]) for k in model.buffers)

    X = rng.normal(size=(80, 6))
    y = (X[:, 0] > 0).astype(int)
    ens_ok = True
    for ens in (B.adaboost_train(X, 2 * y - 1, rounds=10), B.gbdt_train(X, y, B.GBDTParams(trees=5))):
        B.save_ensemble(ens, tmp_path / "e1")
        again = B.load_ensemble(tmp_path / "e1")
        B.save_ensemble(again, tmp_path / "e2")
        ens_ok &= (tmp_path / "e1").read_bytes() == (tmp_path / "e2").read_bytes()
        ens_ok &= np.array_equal(ens.predict_labels(X), again.predict_labels(X))

    records, labels_text = make_records(12, seed=9)
    labels = signal_io.load_labels(labels_text, frozenset({"A"}))
    cache = signal_io.build_cache(records, labels, seed=2)
    signal_io.write_cache(cache, tmp_path / "c1")
    cback = signal_io.read_cache(tmp_path / "c1")
    signal_io.write_cache(cback, tmp_path / "c2")
    checks = [
        ("model file bytes", (tmp_path / "m1").read_bytes() == (tmp_path / "m2").read_bytes()),
        ("model tensors", same_tensors),
        ("ensemble files and predictions", ens_ok),
        ("cache file bytes", (tmp_path / "c1").read_bytes() == (tmp_path / "c2").read_bytes()),
        ("cache signals", np.array_equal(cache.signals(), cback.signals())),
    ]
    verdict(9, "save/load round trips", checks, time.perf_counter() - t0, 5.0)
