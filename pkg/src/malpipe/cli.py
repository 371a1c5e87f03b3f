"""``malpipe`` command line.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 model error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .bundle import dumps, load_bundle
from .data import FORMATS, infer_format, load_dataset, save_dataset
from .errors import ConfigError, DataError, DimensionMismatchError, MalpipeError
from .metrics import write_roc_csv
from .pipeline import evaluate_bundle, load_config, train
from .synth import SynthSpec, generate

log = logging.getLogger("malpipe")


def _emit(obj):
    sys.stdout.write(dumps(obj))


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    bundle, val_metrics = train(cfg)
    _emit({"bundle": str(cfg.output_dir), "validation": val_metrics.to_dict(include_roc=False)})
    return 0


def _load_for_bundle(bundle, path, fmt, require_labels):
    data = load_dataset(path, fmt, require_labels=require_labels)
    if data.n_rows and data.feature_count != bundle.n_features:
        raise DimensionMismatchError(bundle.n_features, data.feature_count)
    return data


def cmd_evaluate(args) -> int:
    bundle = load_bundle(args.bundle)
    data = _load_for_bundle(bundle, args.data, args.format, True)
    if data.n_rows == 0:
        raise DataError("evaluation data has no rows")
    report = evaluate_bundle(bundle, data)
    if args.roc_csv:
        write_roc_csv(report.roc_points, args.roc_csv)
    _emit(report.to_dict(include_roc=False))
    return 0


def cmd_predict(args) -> int:
    bundle = load_bundle(args.bundle)
    data = _load_for_bundle(bundle, args.data, args.format, False)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row_id", "probability", "label"])
        if data.n_rows == 0:
            log.warning("input %s has no rows; wrote header only", args.data)
            return 0
        probs, labels = bundle.predict(data)
        for rid, p, lab in zip(data.row_ids.tolist(), probs.tolist(), labels.tolist()):
            w.writerow([rid, repr(p), lab])
    return 0


def cmd_synth(args) -> int:
    try:
        spec = SynthSpec(
            rows=args.rows,
            dims=args.dims,
            informative=args.informative,
            noise=args.noise,
            seed=args.seed,
            shift=args.shift,
            rule_seed=args.rule_seed,
        )
    except DataError as exc:
        raise ConfigError(f"invalid synth spec: {exc}") from exc
    fmt = args.format or infer_format(args.out)
    ds, rule = generate(spec)
    save_dataset(ds, args.out, fmt)
    rule_path = Path(str(args.out) + ".rule.json")
    rule_path.write_text(dumps({"spec": vars(spec), "rule": rule.to_dict()}), encoding="utf-8")
    neg, pos = ds.class_counts()
    log.info("wrote %d rows (%d benign, %d malicious) to %s", ds.n_rows, neg, pos, args.out)
    return 0


def _metrics_table(manifest):
    rows = []
    for split_name, m in manifest["metrics"].items():
        rows.append([
            split_name,
            *[("" if m[k] is None else f"{m[k]:.4f}") for k in ("accuracy", "precision", "recall", "f1", "auc")],
            m["tp"], m["fp"], m["tn"], m["fn"],
        ])
    return ["split", "accuracy", "precision", "recall", "f1", "auc", "tp", "fp", "tn", "fn"], rows


def cmd_report(args) -> int:
    bundle = load_bundle(args.bundle)
    m = bundle.manifest
    print(f"bundle      {args.bundle}")
    print(f"learner     {m['learner']['kind']}")
    print(f"reduction   {m['reduction']['method']} k={m['reduction']['k']} (from {m['data']['n_features']})")
    print(f"vote        w1={m['vote']['w1']:.1f} w2={m['vote']['w2']:.1f}")
    print(f"clean       {json.dumps(m['clean_report'], sort_keys=True)}")
    print(f"splits      {json.dumps(m['data']['splits'], sort_keys=True)}")
    tel = m.get("telemetry", {})
    if tel:
        print(f"telemetry   total {tel['total_seconds']:.2f}s, peak RSS {tel['peak_rss_mb']:.0f} MB")
    print("stages      " + " -> ".join(s["stage"] for s in m["stage_trace"]))
    print()
    header, rows = _metrics_table(m)
    w = csv.writer(sys.stdout, delimiter="\t", lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)

    if args.out_dir:
        from . import plotting

        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
            cw = csv.writer(fh, lineterminator="\n")
            cw.writerow(header)
            cw.writerows(rows)
        with open(out / "weight_grid.csv", "w", newline="", encoding="utf-8") as fh:
            cw = csv.writer(fh, lineterminator="\n")
            cw.writerow(["w1", "w2", "accuracy"])
            for row in bundle.ensemble.grid_report:
                cw.writerow([row["w1"], row["w2"], row["accuracy"]])
        curves = {k: ([tuple(p) for p in v.get("roc_points", [])], v["auc"]) for k, v in m["metrics"].items()}
        for name, (points, _) in curves.items():
            if points:
                write_roc_csv(points, out / f"roc_{name}.csv")
        plotting.plot_roc(curves, out / "roc.png")
        plotting.plot_weight_grid(bundle.ensemble.grid_report, bundle.ensemble.w1, out / "weight_grid.png")
        plotting.plot_reducer(bundle.reducer.to_dict(), out / "reducer.png")
        if tel:
            plotting.plot_stage_times(tel["stage_seconds"], out / "stage_times.png")
        print(f"\nwrote tables and figures to {out}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="malpipe", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log stage timings")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run the full training pipeline from a JSON config")
    t.add_argument("--config", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score a labeled dataset with a bundle")
    e.add_argument("--bundle", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--format", choices=FORMATS)
    e.add_argument("--roc-csv")
    e.set_defaults(func=cmd_evaluate)

    pr = sub.add_parser("predict", help="write per-row probabilities and labels")
    pr.add_argument("--bundle", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--format", choices=FORMATS)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_predict)

    s = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    s.add_argument("--rows", type=int, required=True)
    s.add_argument("--dims", type=int, required=True)
    s.add_argument("--informative", type=int, required=True)
    s.add_argument("--noise", type=float, default=0.0, help="label flip probability")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--shift", type=float, default=0.0, help="mean shift of every feature (drift)")
    s.add_argument("--rule-seed", type=int, help="seed for the labeling rule (default: --seed)")
    s.add_argument("--format", choices=FORMATS)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    r = sub.add_parser("report", help="print the manifest summary and metrics table")
    r.add_argument("--bundle", required=True)
    r.add_argument("--out-dir", help="also write CSV tables and PNG figures here")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except MalpipeError as exc:
        stage = getattr(exc, "stage", None)
        prefix = f"[{stage}] " if stage else ""
        print(f"malpipe {args.command}: error: {prefix}{type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
