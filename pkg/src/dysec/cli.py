"""Operator command line: acquire/synthesize traces, run the pipeline, scan.

Subcommands::

    dysec synth     --out DIR --seed N [--benign N] [--malicious N] [--noise X]
    dysec acquire   --packages FILE --fixtures DIR --out DIR [--window S]
    dysec pipeline  --traces DIR --out DIR [--seed N] [--workers N]
    dysec scan      --model FILE BUNDLE_OR_TRACE_DIR
    dysec similar   --index FILE [--out FILE] QUERY

Configuration comes from an optional ``KEY = value`` file (``--config``) with
flags taking precedence; ``DYSEC_WORKERS`` is the worker-count fallback.
Exit codes are stable for scripting: 0 success, 1 usage, 2 acquisition
failure, 3 degenerate data, 4 model mismatch.

All outputs are deterministic given identical inputs and seeds, except the
measured timing fields (``timing.json`` and the scan record's ``elapsed_ms``).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from dysec import acquisition, evaluation, features, models, selection, similarity
from dysec.synthcorpus import synth_corpus
from dysec.trace_model import (
    ArchiveKind,
    Label,
    PackageRef,
    TraceBundle,
    bundle_from_json,
    bundle_to_json,
    read_bundle_document,
)
from dysec import trace_parsers
from dysec.trace_parsers import LOG_FILE_SUFFIXES, LogKind

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ACQUISITION = 2
EXIT_DEGENERATE = 3
EXIT_MODEL_MISMATCH = 4


@dataclass
class RunConfig:
    traces: str = ""
    out: str = "out"
    model: str = ""
    catalog: str = ""
    seed: int = 0
    workers: int = 0  # 0 = DYSEC_WORKERS env, else 4
    window: int = 120
    r_max: float = selection.DEFAULT_R_MAX
    ims_low: float = selection.DEFAULT_IMS_LOW
    ims_high: float = selection.DEFAULT_IMS_HIGH
    similarity_levenshtein: float = similarity.DEFAULT_THRESHOLDS["levenshtein"]
    similarity_jaccard: float = similarity.DEFAULT_THRESHOLDS["jaccard"]
    similarity_cosine: float = similarity.DEFAULT_THRESHOLDS["cosine"]

    def effective_workers(self) -> int:
        if self.workers > 0:
            return self.workers
        env = os.environ.get("DYSEC_WORKERS", "")
        if env.isdigit() and int(env) > 0:
            return int(env)
        return 4


def load_config(path: str | Path) -> RunConfig:
    config = RunConfig()
    known = {f.name: f.type for f in fields(RunConfig)}
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in known:
            raise ValueError(f"{path}:{line_no}: unknown config key {key!r}")
        current = getattr(config, key)
        if isinstance(current, int):
            setattr(config, key, int(value))
        elif isinstance(current, float):
            setattr(config, key, float(value))
        else:
            setattr(config, key, value)
    return config


def _merged_config(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {}
    for key in ("traces", "out", "model", "catalog", "seed", "workers", "window"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    return replace(config, **overrides)


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(args: argparse.Namespace) -> int:
    config = _merged_config(args)
    out_dir = Path(config.out)
    bundles_dir = out_dir / "bundles"
    bundles_dir.mkdir(parents=True, exist_ok=True)
    corpus = synth_corpus(
        n_benign=args.benign,
        n_malicious=args.malicious,
        seed=config.seed,
        noise_level=args.noise,
    )
    for bundle in corpus.bundles:
        path = bundles_dir / f"{bundle.package.name}.json"
        path.write_text(bundle_to_json(bundle))
    (out_dir / "corpus.json").write_text(json.dumps(corpus.metadata, indent=2, sort_keys=True))
    print(f"wrote {len(corpus.bundles)} bundles to {bundles_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# acquire
# ---------------------------------------------------------------------------

def _read_package_list(path: Path) -> list[PackageRef]:
    packages = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            name, version = row[0].strip(), row[1].strip()
            kind = ArchiveKind(row[2].strip()) if len(row) > 2 else ArchiveKind.TAR_GZ
            label = Label(row[3].strip()) if len(row) > 3 else Label.UNKNOWN
            packages.append(PackageRef(name, version, kind, label))
    return packages


def cmd_acquire(args: argparse.Namespace) -> int:
    config = _merged_config(args)
    packages = _read_package_list(Path(args.packages))
    if not packages:
        print("error: empty package list", file=sys.stderr)
        return EXIT_USAGE

    fixture_bundles = []
    for path in sorted(Path(args.fixtures).glob("*.json")):
        fixture_bundles.append(bundle_from_json(path.read_text()))
    replay = acquisition.ReplayFixtureExecutor.from_bundles(fixture_bundles)
    targets = [
        acquisition.ExecutorTarget(f"replay-{i}", acquisition.Transport.REPLAY_FIXTURE)
        for i in range(max(1, args.targets))
    ]
    executors = acquisition.executors_for(targets, replay=replay)
    out_dir = Path(config.out)
    result = acquisition.run_campaign(
        packages, targets, executors, out_dir,
        window_s=config.window, seed=config.seed,
    )
    bundles_dir = out_dir / "bundles"
    bundles_dir.mkdir(parents=True, exist_ok=True)
    for bundle in result.bundles:
        (bundles_dir / f"{bundle.package.name}.json").write_text(bundle_to_json(bundle))

    capture_failures = [
        s for s in result.sessions
        if s.status is acquisition.SessionStatus.FAILED
        and s.failure_kind in ("unreachable", "corrupted")
    ]
    print(
        f"manifest rows: {len(result.manifest.rows)}, bundles: {len(result.bundles)}, "
        f"capture failures: {len(capture_failures)}"
    )
    return EXIT_ACQUISITION if capture_failures else EXIT_OK


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def run_pipeline(
    bundle_docs,
    out_dir: Path,
    config: RunConfig,
) -> dict:
    """Clean -> extract -> normalize -> split -> select -> train -> evaluate.

    Deterministic given seeds; measured timings go to a sidecar file.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}
    t0 = time.perf_counter()

    cleaned, clean_report = features.clean_corpus(bundle_docs)
    catalog = features.default_feature_catalog()
    pattern_catalog = (
        features.load_pattern_catalog(config.catalog)
        if config.catalog
        else features.default_pattern_catalog()
    )

    workers = config.effective_workers()
    def _extract(bundle):
        return features.extract_candidates(bundle, catalog, pattern_catalog)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vectors = list(pool.map(_extract, cleaned))
    else:
        vectors = [_extract(b) for b in cleaned]
    timings["extract_s"] = time.perf_counter() - t0

    X, y, names = features.vectors_to_matrix(vectors, catalog)
    if np.unique(y).size < 2:
        raise evaluation.InsufficientClass("corpus contains a single class")
    features.write_feature_matrix_csv(out_dir / "features.csv", vectors, catalog)

    X_norm, bounds = features.minmax_normalize(X, names)
    plan = evaluation.stratified_split(y, seed=config.seed)
    tr, va, te = plan.parts()

    t1 = time.perf_counter()
    report = selection.select_sef(
        X_norm[tr], y[tr], names,
        groups=catalog.categories,
        r_max=config.r_max, ims_low=config.ims_low, ims_high=config.ims_high,
        seed=config.seed,
        X_val=X_norm[va], y_val=y[va],
    )
    timings["selection_s"] = time.perf_counter() - t1
    (out_dir / "selection.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True)
    )
    selection.write_sef_list(out_dir / "sef.txt", report.sef)

    sef_cols = [list(names).index(f) for f in report.sef]
    sef_names = tuple(report.sef)
    sef_bounds = {f: bounds.as_dict()[f] for f in sef_names}

    results: dict[str, dict] = {}
    metric_rows: dict[tuple[str, str], evaluation.MetricSet] = {}
    for kind in selection.ALL_MODEL_KINDS:
        t2 = time.perf_counter()
        model = models.train(
            models.default_config(kind, seed=config.seed),
            X_norm[np.ix_(tr, sef_cols)], y[tr],
            feature_names=sef_names,
            X_val=X_norm[np.ix_(va, sef_cols)], y_val=y[va],
        )
        timings[f"train_{kind.value}_s"] = time.perf_counter() - t2
        model.normalization = sef_bounds
        models.save_model(model, out_dir / f"model_{kind.value}.json")

        t3 = time.perf_counter()
        test_scores = models.score(model, X_norm[np.ix_(te, sef_cols)])
        test_time = time.perf_counter() - t3
        timings[f"test_{kind.value}_s"] = test_time
        preds = (test_scores > 0.5).astype(np.int64)
        cm = evaluation.confusion(preds, y[te])
        mset = evaluation.metrics(cm, scores=test_scores, truth=y[te])
        metric_rows[(kind.value, "combined")] = mset
        evaluation.write_confusion_csv(out_dir / f"confusion_{kind.value}.csv", cm)
        results[kind.value] = {
            "metrics": {k: v for k, v in mset.to_dict().items() if k != "test_time_s"},
            "confusion": {"tp": cm.tp, "tn": cm.tn, "fp": cm.fp, "fn": cm.fn},
        }

    evaluation.write_metrics_csv(out_dir / "metrics.csv", metric_rows)
    evaluation.write_evaluation_json(
        out_dir / "evaluation.json",
        {
            "models": results,
            "selection": {"cf": report.cf_count, "idf": report.idf_count, "sef": len(report.sef)},
            "clean": {
                "kept": clean_report.kept,
                "duplicates": len(clean_report.dropped_duplicates),
                "incomplete": len(clean_report.dropped_incomplete),
            },
            "split": {"train": len(tr), "validation": len(va), "test": len(te)},
            "seed": config.seed,
        },
    )
    timings["total_s"] = time.perf_counter() - t0
    (out_dir / "timing.json").write_text(json.dumps(timings, indent=2, sort_keys=True))
    return {"results": results, "selection": report, "timings": timings}


def cmd_pipeline(args: argparse.Namespace) -> int:
    config = _merged_config(args)
    traces_dir = Path(config.traces) if config.traces else None
    if traces_dir is None or not traces_dir.exists():
        print("error: --traces directory required", file=sys.stderr)
        return EXIT_USAGE
    docs = [
        read_bundle_document(path.read_text(), source=str(path))
        for path in sorted(traces_dir.glob("*.json"))
    ]
    if not docs:
        print("error: no bundle documents under --traces", file=sys.stderr)
        return EXIT_USAGE
    try:
        out = run_pipeline(docs, Path(config.out), config)
    except evaluation.InsufficientClass as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    best = max(out["results"].items(), key=lambda kv: kv[1]["metrics"]["accuracy"])
    print(f"pipeline done; best model {best[0]} accuracy {best[1]['metrics']['accuracy']:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# scan
# ---------------------------------------------------------------------------

def _load_scan_bundle(path: Path):
    if path.is_dir():
        logs = {}
        install_suffix = LOG_FILE_SUFFIXES[LogKind.INSTALL]
        name = ""
        for suffix in LOG_FILE_SUFFIXES.values():
            matches = sorted(path.glob(f"*_{suffix}"))
            if not matches:
                raise FileNotFoundError(f"missing *_{suffix} under {path}")
            logs[suffix] = matches[0].read_text()
            if suffix == install_suffix:
                name = matches[0].name[: -len("_" + install_suffix)]
        syscalls = trace_parsers.parse_syscalls(logs[LOG_FILE_SUFFIXES[LogKind.SYSCALL]]).records
        return TraceBundle(
            package=PackageRef(name=name, version="0"),
            outcome=trace_parsers.classify_install_log(
                logs[LOG_FILE_SUFFIXES[LogKind.INSTALL]]
            ),
            filetop=trace_parsers.parse_filetop(logs[LOG_FILE_SUFFIXES[LogKind.FILETOP]]).records,
            opens=trace_parsers.parse_opensnoop(
                logs[LOG_FILE_SUFFIXES[LogKind.OPENSNOOP]]
            ).records,
            tcp=trace_parsers.parse_tcpconnect(
                logs[LOG_FILE_SUFFIXES[LogKind.TCPCONNECT]]
            ).records,
            syscalls=tuple(sorted(syscalls, key=lambda e: e.timestamp_ms)),
        )
    return bundle_from_json(path.read_text())


def scan_path(path: Path, model: models.TrainedModel, pattern_catalog=None) -> dict:
    """Verdict for a bundle JSON or trace directory.

    ``elapsed_ms`` covers the whole parse -> extract -> normalize -> score
    path, which is what the sub-second scan budget is measured against.
    """
    started = time.perf_counter()
    bundle = _load_scan_bundle(Path(path))
    return scan_bundle(bundle, model, pattern_catalog, _started=started)


def scan_bundle(
    bundle, model: models.TrainedModel, pattern_catalog=None, _started: float | None = None
) -> dict:
    """Verdict for an already-parsed bundle."""
    started = time.perf_counter() if _started is None else _started
    if model.normalization is None:
        raise models.DimensionMismatch("model lacks stored normalization bounds")
    catalog = features.default_feature_catalog()
    known = set(catalog.names)
    missing = [f for f in model.feature_names if f not in known]
    if missing or set(model.feature_names) - set(model.normalization):
        raise models.DimensionMismatch(f"model features not extractable: {missing}")

    vector = features.extract_candidates(bundle, catalog, pattern_catalog)
    raw = np.array([[vector.values[f] for f in model.feature_names]])
    bounds = features.MinMaxBounds.from_dict(
        {f: model.normalization[f] for f in model.feature_names}
    )
    row = features.apply_minmax(raw, bounds)
    verdict_score = float(models.score(model, row[0]))

    importances = models.feature_importances(model)
    active = [
        (float(importances[i]), name)
        for i, name in enumerate(model.feature_names)
        if raw[0, i] != 0.0
    ]
    top = [name for _, name in sorted(active, key=lambda t: (-t[0], t[1]))[:5]]
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    return {
        "package": bundle.package.name,
        "score": verdict_score,
        "class": "malicious" if verdict_score > 0.5 else "benign",
        "top_features": top,
        "elapsed_ms": elapsed_ms,
    }


def cmd_scan(args: argparse.Namespace) -> int:
    config = _merged_config(args)
    if not config.model:
        print("error: --model required", file=sys.stderr)
        return EXIT_USAGE
    model = models.load_model(config.model)
    pattern_catalog = (
        features.load_pattern_catalog(config.catalog) if config.catalog else None
    )
    try:
        verdict = scan_path(Path(args.bundle), model, pattern_catalog)
    except models.DimensionMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL_MISMATCH
    print(json.dumps(verdict, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# similar
# ---------------------------------------------------------------------------

def cmd_similar(args: argparse.Namespace) -> int:
    config = _merged_config(args)
    index_path = Path(args.index)
    names = [
        line.strip()
        for line in index_path.read_text().splitlines()
        if line.strip() and not line.startswith("#")
    ]
    if not names:
        print("error: empty index", file=sys.stderr)
        return EXIT_USAGE
    thresholds = {
        "levenshtein": config.similarity_levenshtein,
        "jaccard": config.similarity_jaccard,
        "cosine": config.similarity_cosine,
    }
    candidates = similarity.find_counterparts(args.query, names, thresholds)
    out_path = Path(args.report) if args.report else Path(config.out) / "similar.csv"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    similarity.write_candidates_csv(out_path, args.query, candidates)
    print(f"{len(candidates)} candidates -> {out_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    # Usage problems exit 1 per the documented code contract.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="KEY = value configuration file")
    parser.add_argument("--traces", help="bundle/trace directory")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--window", type=int, help="capture window seconds")
    parser.add_argument("--model", help="trained model JSON")
    parser.add_argument("--catalog", help="pattern catalog JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dysec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[], help="generate a labeled synthetic corpus")
    _add_common(p)
    p.add_argument("--benign", type=int, default=500)
    p.add_argument("--malicious", type=int, default=500)
    p.add_argument("--noise", type=float, default=0.2)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("acquire", help="run a capture campaign over a package list")
    _add_common(p)
    p.add_argument("--packages", required=True, help="CSV: name,version[,kind[,label]]")
    p.add_argument("--fixtures", required=True, help="directory of replay bundle JSONs")
    p.add_argument("--targets", type=int, default=1, help="number of replay targets")
    p.set_defaults(func=cmd_acquire)

    p = sub.add_parser("pipeline", help="feature/selection/training/evaluation run")
    _add_common(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("scan", help="score one package bundle or trace directory")
    _add_common(p)
    p.add_argument("bundle", help="bundle JSON or trace directory")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("similar", help="rank name counterparts from an index file")
    _add_common(p)
    p.add_argument("--index", required=True, help="one package name per line")
    p.add_argument("--report", help="output CSV path")
    p.add_argument("query")
    p.set_defaults(func=cmd_similar)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except acquisition.AcquisitionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ACQUISITION
    except models.DegenerateData as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
