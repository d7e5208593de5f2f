#!/usr/bin/env python3
"""Reference-scan regression fixture.

Runs `nvscan simulate` on the reference scan and recomputes the deviation
statistics from the written CSV grids with numpy, independently of the
library's own report. Without --check the statistics are printed as JSON;
with --check they are compared against a saved fixture.
"""

import argparse
import json
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np


def load_grid(path):
    header = {}
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            header[key.strip()] = value.strip()
        elif line.strip():
            rows.append([float(v) for v in line.split(",")])
    values = np.array(rows)
    assert values.shape == (int(header["ny"]), int(header["nx"])), path
    return values


def statistics(out, margin, threshold):
    rec = load_grid(out / "reconstructed.csv")
    truth = load_grid(out / "true_field.csv")
    dev = np.abs(rec - truth)
    interior = dev[margin:-margin, margin:-margin]
    return {
        "max_all": float(dev.max()),
        "max_interior": float(interior.max()),
        "rms_interior": float(np.sqrt(np.mean(interior**2))),
        "fraction_below": float(np.mean(interior <= threshold)),
        "true_min": float(truth.min()),
        "true_max": float(truth.max()),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cli", required=True, help="path to the nvscan executable")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--margin", type=int, default=4)
    ap.add_argument("--threshold", type=float, default=0.03)
    ap.add_argument("--check", help="fixture JSON to compare against")
    ap.add_argument("--tolerance", type=float, default=1e-6, help="absolute, mT")
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "run"
        subprocess.run([args.cli, "simulate", "--seed", str(args.seed), "--out", str(out)],
                       check=True, stdout=subprocess.DEVNULL)
        stats = statistics(out, args.margin, args.threshold)
        report = json.loads((out / "report.json").read_text())

    for key in ("max_all", "max_interior", "rms_interior", "fraction_below"):
        if abs(report[key] - stats[key]) > 1e-12:
            print(f"report.json {key} = {report[key]} disagrees with recomputed {stats[key]}")
            return 1

    if not args.check:
        print(json.dumps({"seed": args.seed, "margin": args.margin,
                          "threshold": args.threshold, **stats}, indent=2))
        return 0

    fixture = json.loads(Path(args.check).read_text())
    bad = [k for k, v in stats.items() if abs(v - fixture[k]) > args.tolerance]
    for k in bad:
        print(f"{k}: got {stats[k]!r}, fixture {fixture[k]!r}")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
