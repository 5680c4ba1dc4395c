"""Command-line pipeline: synth / ingest / inject / transform / train /
eval / predict / report.

Every command writes a manifest (command, config snapshot, seed, input and
output digests) next to its outputs; re-running with the same manifest inputs
reproduces byte-identical files.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .gat_model import load_checkpoint, predict as predict_graph, save_checkpoint
from .inject import (ANOMALOUS_KINDS, AnomalyKind, InjectionParams,
                     build_dataset, read_dataset, write_dataset)
from .metrics import EvalReport, anomalous_runs, report_to_csv, report_to_text
from .mtf_graph import read_graphs, transform, transform_many, write_graphs
from .seeds import derive_seed
from .train import (TrainConfig, evaluate_split, loss_curves_to_csv,
                    run_cross_validation)
from .trace import (SynthesisProfile, TraceSchema, filter_complete,
                    ingest_raw_log, read_traces_csv, synthesize_clean,
                    write_traces_csv)
from .gat_model import prepare_graph


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path: Path, command: str, config: dict, seed,
                   inputs: list, outputs: list) -> None:
    manifest = {
        "tool": "rssigat",
        "version": __version__,
        "command": command,
        "master_seed": seed,
        "config": config,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "outputs": {str(p): _sha256(Path(p)) for p in outputs},
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def _schema_from_args(args) -> TraceSchema:
    return TraceSchema(expected_length=args.length,
                       rssi_min=args.rssi_min, rssi_max=args.rssi_max)


def _add_schema_flags(parser, default_length=300):
    parser.add_argument("--length", type=int, default=default_length,
                        help="samples per trace")
    parser.add_argument("--rssi-min", type=float, default=0.0)
    parser.add_argument("--rssi-max", type=float, default=128.0)


# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    schema = _schema_from_args(args)
    profile = SynthesisProfile(baseline_range=(args.baseline_min, args.baseline_max),
                               jitter=args.jitter)
    rng = np.random.default_rng(derive_seed(args.seed, "synth"))
    traces = synthesize_clean(args.count, schema, rng, profile)
    out = Path(args.out)
    write_traces_csv(out, traces)
    write_manifest(out.with_name(out.name + ".manifest.json"), "synth",
                   {"count": args.count, "length": args.length,
                    "baseline": [args.baseline_min, args.baseline_max],
                    "jitter": args.jitter},
                   args.seed, [], [out])
    print(f"wrote {len(traces)} traces to {out}")
    return 0


def cmd_ingest(args) -> int:
    schema = _schema_from_args(args)
    source = Path(args.input)
    logs = ingest_raw_log(source.read_text(encoding="utf-8"), schema)
    traces = filter_complete(logs, schema)
    out = Path(args.out)
    write_traces_csv(out, traces)
    write_manifest(out.with_name(out.name + ".manifest.json"), "ingest",
                   {"length": args.length}, None, [source], [out])
    print(f"kept {len(traces)} complete links of {len(logs)}")
    return 0


def cmd_inject(args) -> int:
    traces = read_traces_csv(Path(args.input))
    if not traces:
        raise UsageError("input has no traces")
    length = traces[0].length
    schema = TraceSchema(expected_length=length,
                         rssi_min=args.rssi_min, rssi_max=args.rssi_max)
    if args.each is not None:
        counts = {kind: args.each for kind in ANOMALOUS_KINDS}
    else:
        counts = {AnomalyKind.SUDDEN_D: args.suddend,
                  AnomalyKind.SUDDEN_R: args.suddenr,
                  AnomalyKind.INSTA_D: args.instad,
                  AnomalyKind.SLOW_D: args.slowd}
    counts[AnomalyKind.NONE] = args.clean
    params = (InjectionParams() if length == 300
              else InjectionParams.scaled_to_length(length))
    rng = np.random.default_rng(derive_seed(args.seed, "inject"))
    dataset = build_dataset(traces, counts, params, rng, schema)
    out = Path(args.out)
    write_dataset(out, dataset)
    n_anomalous = sum(1 for item in dataset if item.kind is not AnomalyKind.NONE)
    write_manifest(out.with_name(out.name + ".manifest.json"), "inject",
                   {"composition": {k.value: v for k, v in counts.items()},
                    "trace_length": length},
                   args.seed, [Path(args.input)], [out])
    print(f"{len(dataset)} total, {n_anomalous} anomalous traces -> {out}")
    return 0


def cmd_transform(args) -> int:
    dataset = read_dataset(Path(args.input))
    if not dataset:
        raise UsageError("input has no traces")
    schema = TraceSchema(expected_length=dataset[0].trace.length,
                         rssi_min=args.rssi_min, rssi_max=args.rssi_max)
    graphs = transform_many([item.trace for item in dataset], schema,
                            n_bins=args.bins, workers=args.workers)
    out = Path(args.out)
    write_graphs(out, graphs)
    write_manifest(out.with_name(out.name + ".manifest.json"), "transform",
                   {"bins": args.bins}, None, [Path(args.input)], [out])
    print(f"wrote {len(graphs)} graphs to {out}")
    return 0


def _load_aligned_graphs(dataset, graphs_path, schema):
    if graphs_path:
        graphs = read_graphs(Path(graphs_path))
        if len(graphs) != len(dataset):
            raise UsageError(
                f"{len(graphs)} graphs for {len(dataset)} traces")
        for g, item in zip(graphs, dataset):
            if g.link_id != item.trace.link_id:
                raise UsageError(
                    f"graph/trace link id mismatch: {g.link_id} vs "
                    f"{item.trace.link_id}")
    else:
        graphs = [transform(item.trace, schema) for item in dataset]
    return [prepare_graph(g) for g in graphs]


def _train_config(args) -> TrainConfig:
    cfg = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    overrides = {}
    for flag, key in (("splits", "n_splits"), ("epochs", "epochs"),
                      ("lr", "learning_rate"), ("optimizer", "optimizer"),
                      ("seed", "seed"), ("threshold", "threshold")):
        value = getattr(args, flag)
        if value is not None:
            overrides[key] = value
    if overrides:
        base = cfg.to_dict()
        base.update(overrides)
        cfg = TrainConfig(**base)
    return cfg


def cmd_train(args) -> int:
    dataset = read_dataset(Path(args.dataset))
    cfg = _train_config(args)
    schema = TraceSchema(expected_length=dataset[0].trace.length,
                         rssi_min=args.rssi_min, rssi_max=args.rssi_max)
    prepared = _load_aligned_graphs(dataset, args.graphs, schema)
    result = run_cross_validation(dataset, cfg, schema, prepared=prepared,
                                  workers=args.workers)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    for k, model in enumerate(result.models):
        outputs.extend(save_checkpoint(out_dir / f"checkpoint_{k}", model))
    splits_path = out_dir / "splits.json"
    splits_path.write_text(json.dumps(
        [{"train": tr.tolist(), "test": te.tolist()}
         for tr, te in result.splits]) + "\n", encoding="utf-8")
    curves_path = out_dir / "loss_curves.csv"
    curves_path.write_text(loss_curves_to_csv(result.loss_curves),
                           encoding="utf-8")
    report_json = out_dir / "report.json"
    report_json.write_text(result.report.to_json(), encoding="utf-8")
    report_txt = out_dir / "report.txt"
    report_txt.write_text(report_to_text(result.report), encoding="utf-8")
    report_csv = out_dir / "report.csv"
    report_csv.write_text(report_to_csv(result.report), encoding="utf-8")
    outputs.extend([splits_path, curves_path, report_json, report_txt, report_csv])
    inputs = [Path(args.dataset)] + ([Path(args.graphs)] if args.graphs else [])
    write_manifest(out_dir / "manifest.json", "train", cfg.to_dict(),
                   cfg.seed, inputs, outputs)
    avg = result.report.averages
    print(f"parameter count: {result.report.parameter_count}")
    print(f"anomalous F1 {avg['anomalous'].f1:.4f}, "
          f"non-anomalous F1 {avg['non_anomalous'].f1:.4f} "
          f"over {cfg.n_splits} splits -> {out_dir}")
    return 0


def cmd_eval(args) -> int:
    run_dir = Path(args.run)
    dataset = read_dataset(Path(args.dataset))
    schema = TraceSchema(expected_length=dataset[0].trace.length,
                         rssi_min=args.rssi_min, rssi_max=args.rssi_max)
    prepared = _load_aligned_graphs(dataset, args.graphs, schema)
    splits = json.loads((run_dir / "splits.json").read_text(encoding="utf-8"))
    if not 0 <= args.split < len(splits):
        raise UsageError(f"--split must be in [0, {len(splits) - 1}]")
    model = load_checkpoint(run_dir / f"checkpoint_{args.split}")
    stored = EvalReport.from_json((run_dir / "report.json").read_text(encoding="utf-8"))
    threshold = float(stored.config.get("threshold", 0.5))
    test_idx = np.asarray(splits[args.split]["test"])
    metrics = evaluate_split(model, dataset, prepared, test_idx, threshold)
    payload = {
        "split": args.split,
        "anomalous": vars(metrics.anomalous),
        "non_anomalous": vars(metrics.non_anomalous),
        "zero_division": metrics.zero_division,
    }
    out = Path(args.out) if args.out else run_dir / f"eval_split_{args.split}.json"
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                   encoding="utf-8")
    write_manifest(out.with_name(out.name + ".manifest.json"), "eval",
                   {"split": args.split}, None,
                   [Path(args.dataset), run_dir / "splits.json"], [out])
    print(json.dumps(payload, sort_keys=True))
    return 0


def _read_prediction_input(path: Path):
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
    if first == "link_id,idx,rssi":
        return read_traces_csv(path)
    return [item.trace for item in read_dataset(path)]


def cmd_predict(args) -> int:
    model = load_checkpoint(Path(args.checkpoint))
    traces = _read_prediction_input(Path(args.input))
    schema = TraceSchema(expected_length=traces[0].length if traces else 300,
                         rssi_min=args.rssi_min, rssi_max=args.rssi_max)
    out = Path(args.out)
    with open(out, "w", encoding="utf-8") as fh:
        for trace in traces:
            labels = predict_graph(transform(trace, schema), model,
                                   threshold=args.threshold)
            record = {
                "link_id": trace.link_id,
                "labels": labels.tolist(),
                "runs": [[start, length]
                         for start, length in anomalous_runs(labels)],
            }
            fh.write(json.dumps(record) + "\n")
    write_manifest(out.with_name(out.name + ".manifest.json"), "predict",
                   {"threshold": args.threshold, "checkpoint": str(args.checkpoint)},
                   None, [Path(args.input)], [out])
    print(f"predicted {len(traces)} traces -> {out}")
    return 0


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    report = EvalReport.from_json((run_dir / "report.json").read_text(encoding="utf-8"))
    text = report_to_text(report)
    (run_dir / "report.txt").write_text(text, encoding="utf-8")
    (run_dir / "report.csv").write_text(report_to_csv(report), encoding="utf-8")
    write_manifest(run_dir / "report.manifest.json", "report", {}, None,
                   [run_dir / "report.json"],
                   [run_dir / "report.txt", run_dir / "report.csv"])
    print(text, end="")
    return 0


# ---------------------------------------------------------------------------

class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rssigat",
        description="Detect and localize link-layer anomalies in RSSI traces.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate clean traces")
    p.add_argument("--count", type=int, required=True)
    _add_schema_flags(p)
    p.add_argument("--baseline-min", type=int, default=20)
    p.add_argument("--baseline-max", type=int, default=60)
    p.add_argument("--jitter", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="parse raw link logs, keep complete links")
    p.add_argument("-i", "--input", required=True)
    _add_schema_flags(p)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("inject", help="inject anomalies into clean traces")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--suddend", type=int, default=0)
    p.add_argument("--suddenr", type=int, default=0)
    p.add_argument("--instad", type=int, default=0)
    p.add_argument("--slowd", type=int, default=0)
    p.add_argument("--each", type=int, default=None,
                   help="set every anomaly kind to this count")
    p.add_argument("--clean", type=int, default=0)
    p.add_argument("--rssi-min", type=float, default=0.0)
    p.add_argument("--rssi-max", type=float, default=128.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("transform", help="turn traces into transition-field graphs")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--bins", type=int, default=None,
                   help="quantile bins (default: trace length)")
    p.add_argument("--rssi-min", type=float, default=0.0)
    p.add_argument("--rssi-max", type=float, default=128.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("train", help="cross-validated training")
    p.add_argument("--dataset", required=True)
    p.add_argument("--graphs", default=None)
    p.add_argument("--splits", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--rssi-min", type=float, default=0.0)
    p.add_argument("--rssi-max", type=float, default=128.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="re-evaluate one split from checkpoints")
    p.add_argument("--run", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--graphs", default=None)
    p.add_argument("--split", type=int, required=True)
    p.add_argument("--rssi-min", type=float, default=0.0)
    p.add_argument("--rssi-max", type=float, default=128.0)
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="per-point labels and anomalous runs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--rssi-min", type=float, default=0.0)
    p.add_argument("--rssi-max", type=float, default=128.0)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("report", help="re-render report files from report.json")
    p.add_argument("--run", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"rssigat: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - single CLI boundary
        print(f"rssigat: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
