"""Command line entry point: ``streamqoe {ingest,synthesize,train,predict,plot-data}``.

Exit codes: 0 success, 1 batch failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import glob
import json
import logging
import sys
from pathlib import Path

from . import dataset_store as ds
from . import pipeline
from .errors import QoEError, SchemaMismatch
from .har_ingest import load_durations
from .learner.forest import dumps_forest

log = logging.getLogger("streamqoe")

EXIT_OK, EXIT_BATCH, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _config(args) -> pipeline.PipelineConfig:
    try:
        cfg = pipeline.load_config(args.config)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot load config: {exc}") from exc
    overrides = {k: getattr(args, k, None) for k in
                 ("seed", "output_dir", "test_fraction", "n_estimators", "max_depth",
                  "max_features", "min_samples_leaf", "segment_duration_ms", "segment_pattern")}
    return cfg.updated(**overrides)


def _expand(patterns):
    paths = []
    for pattern in patterns:
        matches = sorted(glob.glob(pattern))
        paths.extend(matches if matches else [pattern])
    return paths


def cmd_ingest(args) -> int:
    if not args.har:
        raise UsageError("ingest needs at least one HAR file")
    cfg = _config(args)
    out_dir = Path(cfg.output_dir)
    durations = load_durations(args.manifest) if args.manifest else None
    ok = 0
    paths = _expand(args.har)
    for path in paths:
        try:
            capture, report = pipeline.ingest_file(Path(path), cfg, durations)
        except (OSError, QoEError, ValueError) as exc:
            log.warning("%s: skipped (%s)", path, exc)
            continue
        target = out_dir / (Path(path).stem + ".capture.json")
        pipeline.write_atomic(target, capture.to_json())
        print(f"{path}: {len(capture.segments)} segments, startup {capture.startup_ms} ms, "
              f"{report.count} stalls ({report.total_s:.3f} s) -> {target}")
        ok += 1
    if ok == 0:
        log.error("no HAR file could be ingested")
        return EXIT_BATCH
    return EXIT_OK


def cmd_synthesize(args) -> int:
    cfg = _config(args)
    if args.sessions < 0:
        raise UsageError("--sessions must be non-negative")
    if cfg.segment_duration_ms < 1000:
        # whole-second stall onsets need at least a second of media between stalls
        raise UsageError("--segment-duration-ms must be at least 1000")
    try:
        records = pipeline.synthesize_from_file(args.profiles, args.sessions, cfg)
    except OSError as exc:
        raise UsageError(f"cannot read profiles: {exc}") from exc
    out = Path(args.out) if args.out else Path(cfg.output_dir) / "dataset.csv"
    pipeline.write_atomic(out, ds.dumps_csv(records))
    print(f"wrote {len(records)} sessions to {out} (seed {cfg.seed})")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    dataset = Path(args.dataset)
    if not dataset.is_file():
        raise UsageError(f"dataset not found: {dataset}")
    records = ds.load_csv(dataset, on_error="skip")
    result = pipeline.train(records, cfg, dataset_name=dataset.name, backend=args.backend)
    out_dir = Path(cfg.output_dir)
    pipeline.write_atomic(out_dir / "model_forest.bin", dumps_forest(result.enhanced))
    pipeline.write_atomic(out_dir / "model_linear.json",
                          json.dumps(result.baseline.to_dict(), indent=2, sort_keys=True) + "\n")
    pipeline.write_atomic(out_dir / "metrics.json", pipeline.dumps_metrics(result.metrics))
    pipeline.write_atomic(out_dir / "comparison.csv", result.report_csv)
    print(_render_comparison(result.metrics))
    return EXIT_OK


def _render_comparison(metrics: dict) -> str:
    lines = []
    for m in metrics["models"]:
        r2 = "n/a" if m["r2"] is None else f"{m['r2']:.4f}"
        lines.append(f"{m['model']}: MSE {m['mse']:.4e}  RMSE {m['rmse']:.4f}  "
                     f"R-squared {r2}  MAE {m['mae']:.4f}")
    return "\n".join(lines)


def cmd_predict(args) -> int:
    try:
        model = pipeline.load_model(args.model)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot load model: {exc}") from exc
    kpis = dict(delay=args.delay, jitter=args.jitter, packet_loss=args.loss,
                bitrate=args.bitrate, throughput=args.throughput)
    if not 0 <= args.loss <= 100:
        log.warning("packet loss %.2f%% is outside [0, 100]", args.loss)
    if args.jitter < 1:
        log.warning("jitter %.2f ms is below 1 ms; cleaned training data never goes below 1", args.jitter)
    if args.throughput < 0:
        log.warning("negative throughput %.0f bps", args.throughput)
    mos = pipeline.predict_kpis(model, **kpis)
    print(f"{mos:.4f}")
    return EXIT_OK


_METRIC_KEYS = ("r2", "mse", "rmse", "mae")


def _metric_rows(path: Path) -> list:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise SchemaMismatch(f"{path}: not a readable JSON file ({exc})") from exc
    blocks = doc.get("models") if isinstance(doc, dict) and "models" in doc else [doc]
    rows = []
    for i, block in enumerate(blocks):
        if not isinstance(block, dict) or any(k not in block for k in _METRIC_KEYS):
            raise SchemaMismatch(f"{path}: metrics need keys {list(_METRIC_KEYS)}")
        name = block.get("model") or (path.stem if len(blocks) == 1 else f"{path.stem}-{i}")
        rows.append({"model": name, **{k: block[k] for k in _METRIC_KEYS}})
    return rows


def cmd_plot_data(args) -> int:
    if not args.metrics:
        raise UsageError("plot-data needs at least one metrics file")
    rows = []
    for path in _expand(args.metrics):
        rows.extend(_metric_rows(Path(path)))
    table = pipeline.comparison_csv(rows)
    if args.out:
        pipeline.write_atomic(Path(args.out), table)
    else:
        sys.stdout.write(table)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streamqoe", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--output-dir", dest="output_dir")

    p = sub.add_parser("ingest", help="HAR files -> capture JSON with stall reports")
    common(p)
    p.add_argument("har", nargs="*", help="HAR files or glob patterns")
    p.add_argument("--pattern", dest="segment_pattern", help="segment URL regex")
    p.add_argument("--segment-duration-ms", dest="segment_duration_ms", type=int)
    p.add_argument("--manifest", help="HLS playlist or JSON list of per-segment durations")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synthesize", help="emulate sessions under network profiles -> dataset CSV")
    common(p)
    p.add_argument("profiles", help="profile file in config.txt grammar")
    p.add_argument("-n", "--sessions", type=int, default=10, help="sessions per profile")
    p.add_argument("--segment-duration-ms", dest="segment_duration_ms", type=int)
    p.add_argument("-o", "--out", help="output CSV (default: <output-dir>/dataset.csv)")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("train", help="clean, engineer, split, fit baseline + forest, evaluate")
    common(p)
    p.add_argument("dataset")
    p.add_argument("--test-fraction", dest="test_fraction", type=float)
    p.add_argument("--n-estimators", dest="n_estimators", type=int)
    p.add_argument("--max-depth", dest="max_depth", type=int)
    p.add_argument("--max-features", dest="max_features", type=float)
    p.add_argument("--min-samples-leaf", dest="min_samples_leaf", type=int)
    p.add_argument("--backend", choices=("cython", "python"), help="forest kernel")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="MOS from five network KPIs")
    p.add_argument("model", help="model_forest.bin or model_linear.json")
    p.add_argument("--delay", type=float, required=True, help="ms")
    p.add_argument("--jitter", type=float, required=True, help="ms")
    p.add_argument("--loss", type=float, required=True, help="packet loss, percent")
    p.add_argument("--bitrate", type=float, required=True, help="kbps")
    p.add_argument("--throughput", type=float, required=True, help="bps")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("plot-data", help="merge metrics JSON files into a model x metric table")
    p.add_argument("metrics", nargs="*")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_plot_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except QoEError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
