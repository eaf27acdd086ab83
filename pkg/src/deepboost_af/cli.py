"""Command-line pipeline: convert, train-dcae, extract-features, train-booster, evaluate, run-all.

Configuration is a JSON file; relative paths in it resolve against the
config file's directory.  Command-line flags override config values.
Exit codes: 0 ok, 2 missing input, 3 parse failure, 4 shape mismatch,
5 degenerate training/evaluation input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import boosting, dcae, metrics, signal_io
from .errors import DeepBoostError, MissingInput, ParseError, ShapeMismatch
from .preprocess import SIGNAL_LENGTH

logger = logging.getLogger("deepboost_af")

ALGOS = ("adaboost", "gbdt-level", "gbdt-leaf")
MODEL_NAMES = {
    ("adaboost", "raw"): "AdaBoost",
    ("adaboost", "dcae"): "D-ADB",
    ("gbdt-level", "raw"): "XGBoost",
    ("gbdt-level", "dcae"): "D-XGB",
    ("gbdt-leaf", "raw"): "LGBM",
    ("gbdt-leaf", "dcae"): "D-LGB",
}


@dataclass
class PipelineConfig:
    records_dir: Path | None
    labels: Path | None
    cache: Path
    output_dir: Path
    split_seed: int = 7
    positive_class: tuple = ("A",)
    dcae: dict = field(default_factory=dict)
    boosters: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path, overrides=None):
        path = Path(path)
        if not path.is_file():
            raise MissingInput(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"config {path}: {exc}") from None
        base = path.parent

        def p(key, default=None):
            v = doc.get(key, default)
            return None if v is None else (base / v)

        if "cache" not in doc or "output_dir" not in doc:
            raise ParseError("config needs 'cache' and 'output_dir'")
        cfg = cls(
            records_dir=p("records_dir"),
            labels=p("labels"),
            cache=p("cache"),
            output_dir=p("output_dir"),
            split_seed=int(doc.get("split_seed", 7)),
            positive_class=tuple(doc.get("positive_class", ["A"])),
            dcae=dict(doc.get("dcae", {})),
            boosters=dict(doc.get("boosters", {k: {} for k in ALGOS})),
        )
        overrides = overrides or {}
        if overrides.get("seed") is not None:
            cfg.split_seed = overrides["seed"]
            cfg.dcae["seed"] = overrides["seed"]
        if overrides.get("feature_mode"):
            cfg.dcae["feature_mode"] = overrides["feature_mode"]
        if overrides.get("positive_class"):
            cfg.positive_class = tuple(overrides["positive_class"].split(","))
        return cfg

    @property
    def feature_mode(self):
        return self.dcae.get("feature_mode", "reduce")

    @property
    def model_path(self):
        return self.output_dir / "dcae.model"

    def features_path(self, mode=None):
        return self.output_dir / f"features_{mode or self.feature_mode}.csv"

    def ensemble_path(self, algo, source):
        return self.output_dir / "ensembles" / f"{algo}-{source}.json"


# ---------------------------------------------------------------------------
# helpers


def _require(path: Path | None, what: str):
    if path is None or not Path(path).exists():
        raise MissingInput(f"{what} not found: {path}")
    return Path(path)


def _read_cache(cfg):
    return signal_io.read_cache(_require(cfg.cache, "cache file"))


def write_features(path, ids, labels, feats):
    n = feats.shape[1]
    lines = ["id,label," + ",".join(f"f{i}" for i in range(n))]
    for rid, lab, row in zip(ids, labels, feats):
        lines.append(f"{rid},{lab}," + ",".join("%.9g" % v for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_features(path):
    ids, labels, rows = [], [], []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("id,label"):
            raise ParseError(f"{path}: missing 'id,label,...' header")
        for line in fh:
            parts = line.rstrip("\n").split(",")
            ids.append(parts[0])
            labels.append(int(parts[1]))
            rows.append(np.array(parts[2:], dtype=np.float64))
    return ids, np.array(labels, dtype=int), np.array(rows)


def _dataset(cfg, source, cache=None):
    """Feature matrix, labels and split flags in cache record order."""
    cache = cache or _read_cache(cfg)
    labels = np.array([r.label for r in cache.records], dtype=int)
    split = np.array([r.split for r in cache.records], dtype=np.uint8)
    if source == "raw":
        X = cache.signals().astype(np.float64)
        return X, labels, split, [r.id for r in cache.records]
    ids, flabels, X = read_features(_require(cfg.features_path(), "feature file"))
    if ids != [r.id for r in cache.records]:
        raise ShapeMismatch("feature file records do not match the cache")
    return X, flabels, split, ids


def _booster_train(algo, params, X, y):
    params = dict(params)
    if algo == "adaboost":
        return boosting.adaboost_train(X, 2 * y - 1, rounds=int(params.get("rounds", 50)))
    growth = "level" if algo == "gbdt-level" else "leaf"
    params.setdefault("growth", growth)
    return boosting.gbdt_train(X, y, boosting.GBDTParams(**params))


# ---------------------------------------------------------------------------
# commands


def cmd_convert(cfg: PipelineConfig, out=None) -> int:
    out = out or sys.stdout
    labels_path = cfg.labels
    if labels_path is None or not labels_path.is_file():
        raise MissingInput("labels file not found")
    records_dir = _require(cfg.records_dir, "records directory")
    labels = signal_io.load_labels(labels_path.read_text(encoding="utf-8"),
                                   frozenset(cfg.positive_class))
    files = {}
    for f in sorted(records_dir.glob("*.csv")):
        if f.resolve() != labels_path.resolve():
            files[f.stem] = f
    for f in sorted(records_dir.glob("*.mat")):
        files[f.stem] = f
    records, failures = [], []
    for stem in sorted(files):
        try:
            records.append(signal_io.read_record_file(files[stem]))
        except ParseError as exc:
            failures.append((files[stem].name, str(exc)))
    cache = signal_io.build_cache(records, labels, cfg.split_seed)
    cfg.cache.parent.mkdir(parents=True, exist_ok=True)
    signal_io.write_cache(cache, cfg.cache)
    c = cache.manifest["counts"]
    print(f"cached {len(cache.records)} records -> {cfg.cache}", file=out)
    print(f"train: {c['train']['1']} positive / {c['train']['0']} negative; "
          f"test: {c['test']['1']} positive / {c['test']['0']} negative", file=out)
    if failures:
        for name, msg in failures:
            print(f"error: {name}: {msg}", file=sys.stderr)
        return 3
    return 0


def _opt_config(cfg):
    d = cfg.dcae
    return dcae.OptimizerConfig(
        learning_rate=float(d.get("learning_rate", 0.001)),
        batch_size=int(d.get("batch_size", 32)),
        epochs=int(d.get("epochs", 30)),
    )


def cmd_train_dcae(cfg: PipelineConfig, out=None) -> int:
    out = out or sys.stdout
    cache = _read_cache(cfg)
    seed = int(cfg.dcae.get("seed", 0))
    train = cache.signals("train")
    model = dcae.build_dcae(seed)
    with metrics.time_block("train-dcae") as t:
        model, log = dcae.train_dcae(model, train, _opt_config(cfg), seed=seed)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    dcae.save_model(model, cfg.model_path)
    dcae.write_loss_log(log, cfg.output_dir / "dcae_loss.csv")
    (cfg.output_dir / "dcae.train.json").write_text(json.dumps({"ttt_s": t.elapsed}), encoding="utf-8")
    test = cache.signals("test")
    if len(test):
        err = dcae.mse(test, dcae.forward(model, test))
        print(f"held-out reconstruction MSE: {err:.6f}", file=out)
    print(f"TTT {metrics.format_hms(t.elapsed)} ({t.elapsed:.2f} s)", file=out)
    return 0


def cmd_extract_features(cfg: PipelineConfig, out=None) -> int:
    out = out or sys.stdout
    cache = _read_cache(cfg)
    model = dcae.load_model(_require(cfg.model_path, "model file"))
    if model.input_length != SIGNAL_LENGTH:
        raise ShapeMismatch(f"model expects input ({model.input_length}, 1) but cache holds "
                            f"signals of shape ({SIGNAL_LENGTH}, 1)")
    feats = dcae.encode_features(model, cache.signals(), cfg.feature_mode)
    path = cfg.features_path()
    write_features(path, [r.id for r in cache.records], [r.label for r in cache.records], feats)
    print(f"wrote {feats.shape[0]} x {feats.shape[1]} features -> {path}", file=out)
    return 0


def cmd_train_booster(cfg: PipelineConfig, algo: str, source: str = "dcae", out=None,
                      data=None) -> int:
    out = out or sys.stdout
    if algo not in ALGOS:
        raise ValueError(f"unknown algorithm {algo!r}")
    X, y, split, _ = data or _dataset(cfg, source)
    tr = split == 0
    with metrics.time_block(algo) as t:
        ens = _booster_train(algo, cfg.boosters.get(algo, {}), X[tr], y[tr])
    path = cfg.ensemble_path(algo, source)
    path.parent.mkdir(parents=True, exist_ok=True)
    boosting.save_ensemble(ens, path)
    path.with_suffix(".train.json").write_text(json.dumps({"ttt_s": t.elapsed}), encoding="utf-8")
    print(f"{MODEL_NAMES[algo, source]}: trained on {int(tr.sum())} records, "
          f"TTT {metrics.format_hms(t.elapsed)} -> {path}", file=out)
    return 0


def evaluate_row(cfg, algo, source, data=None):
    X, y, split, _ = data or _dataset(cfg, source)
    path = _require(cfg.ensemble_path(algo, source), "ensemble file")
    ens = boosting.load_ensemble(path)
    te = split == 1
    pred = ens.predict_labels(X[te]) if te.any() else np.zeros(0, dtype=int)
    cm = metrics.accumulate(pred.tolist(), y[te].tolist())
    sidecar = path.with_suffix(".train.json")
    ttt = json.loads(sidecar.read_text())["ttt_s"] if sidecar.exists() else 0.0
    return metrics.report_row(MODEL_NAMES[algo, source], metrics.compute_metrics(cm, ttt))


def cmd_evaluate(cfg: PipelineConfig, algo: str, source: str = "dcae", out=None) -> int:
    out = out or sys.stdout
    row = evaluate_row(cfg, algo, source)
    name = f"report_{algo}-{source}"
    (cfg.output_dir / f"{name}.csv").write_text(metrics.rows_to_csv([row]), encoding="utf-8")
    text = metrics.rows_to_text([row])
    (cfg.output_dir / f"{name}.txt").write_text(text, encoding="utf-8")
    out.write(text)
    return 0


def cmd_run_all(cfg: PipelineConfig, out=None) -> int:
    out = out or sys.stdout
    status = 0
    if cfg.records_dir is not None:
        status = cmd_convert(cfg, out)
        if status:
            return status
    cmd_train_dcae(cfg, out)
    cmd_extract_features(cfg, out)
    cache = _read_cache(cfg)
    data = {src: _dataset(cfg, src, cache) for src in ("raw", "dcae")}
    rows = []
    for algo in ALGOS:
        if algo not in cfg.boosters:
            logger.warning("no '%s' section in config; skipping its rows", algo)
            continue
        for src in ("raw", "dcae"):
            cmd_train_booster(cfg, algo, src, out, data=data[src])
            rows.append(evaluate_row(cfg, algo, src, data=data[src]))
    (cfg.output_dir / "report.csv").write_text(metrics.rows_to_csv(rows), encoding="utf-8")
    text = metrics.rows_to_text(rows)
    (cfg.output_dir / "report.txt").write_text(text, encoding="utf-8")
    plot = ["model,metric,value"]
    for r in rows:
        for m in ("sensitivity", "accuracy", "precision", "f1"):
            plot.append(f"{r['model']},{m},{r[m]}")
    (cfg.output_dir / "report_plot.csv").write_text("\n".join(plot) + "\n", encoding="utf-8")
    out.write(text)
    return 0


def cmd_synth(out_dir: Path, n_records: int, seed: int, out=None) -> int:
    out = out or sys.stdout
    from .synthetic import make_records

    out_dir.mkdir(parents=True, exist_ok=True)
    records, labels = make_records(n_records, seed)
    for r in records:
        (out_dir / f"{r.id}.mat").write_bytes(signal_io.write_mat_record(r.samples.astype(np.int16)))
    (out_dir / "REFERENCE.csv").write_text(labels, encoding="utf-8")
    print(f"wrote {n_records} synthetic records to {out_dir}", file=out)
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="deepboost-af", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("convert", "train-dcae", "extract-features", "train-booster", "evaluate", "run-all"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--feature-mode", choices=dcae.FEATURE_MODES)
        sp.add_argument("--positive-class", help="comma-separated tags, e.g. A or A,O")
        if name in ("train-booster", "evaluate"):
            sp.add_argument("--algo", choices=ALGOS, required=True)
            sp.add_argument("--input", choices=("dcae", "raw"), default="dcae",
                            help="DCAE features (default) or the normalized raw signal")
    sp = sub.add_parser("synth", help="write a synthetic MAT corpus with REFERENCE.csv")
    sp.add_argument("--out", required=True)
    sp.add_argument("--n", type=int, default=200)
    sp.add_argument("--seed", type=int, default=0)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            return cmd_synth(Path(args.out), args.n, args.seed)
        cfg = PipelineConfig.load(args.config, {"seed": args.seed, "feature_mode": args.feature_mode,
                                                "positive_class": args.positive_class})
        if args.command == "convert":
            return cmd_convert(cfg)
        if args.command == "train-dcae":
            return cmd_train_dcae(cfg)
        if args.command == "extract-features":
            return cmd_extract_features(cfg)
        if args.command == "train-booster":
            return cmd_train_booster(cfg, args.algo, args.input)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.algo, args.input)
        return cmd_run_all(cfg)
    except DeepBoostError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
