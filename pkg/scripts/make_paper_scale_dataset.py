#!/usr/bin/env python3
"""Build the full-composition dataset: 8492 traces of length 300, with 700
injections per anomaly kind and 5692 clean links.

By default the clean pool is synthesized. Pass --raw-log to ingest a real
measurement log instead (text format: `# link <id> noise=<label>` header
lines followed by `<seq>,<rssi>` records); only links without packet loss
are kept, and the pool must reach 8492 complete links.
"""
import argparse
import sys
from pathlib import Path

from rssigat.cli import main as cli


def run(out_dir: Path, seed: int, raw_log: Path | None) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    traces = out_dir / "traces.csv"
    if raw_log is not None:
        code = cli(["ingest", "-i", str(raw_log), "--length", "300",
                    "-o", str(traces)])
    else:
        code = cli(["synth", "--count", "8492", "--length", "300",
                    "--seed", str(seed), "-o", str(traces)])
    if code != 0:
        return code
    code = cli(["inject", "-i", str(traces), "--each", "700",
                "--clean", "5692", "--seed", str(seed + 1),
                "-o", str(out_dir / "dataset.jsonl")])
    if code != 0:
        return code
    return cli(["transform", "-i", str(out_dir / "dataset.jsonl"),
                "-o", str(out_dir / "graphs.jsonl")])


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("runs/full"))
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--raw-log", type=Path, default=None)
    args = parser.parse_args()
    sys.exit(run(args.out, args.seed, args.raw_log))
