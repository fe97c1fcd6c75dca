#!/usr/bin/env python3
"""Desk-scale noise sweep: 5-fold CV at each SNR level, summarised as a
metrics-by-condition table (mean ± std across folds, in percent).

    python3 scripts/desk_sweep.py --levels clean,20,10,0,-5 --out runs/sweep
"""
import argparse
import json
import logging
import time
from pathlib import Path

from vibdiag import desk
from vibdiag.evaluation import format_table, mean_confusion
from vibdiag.training import run_cv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", default="clean,20,15,10,5,0,-5")
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--segments-per-class", type=int, default=desk.SEGMENTS_PER_CLASS)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("runs/desk_sweep"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args.out.mkdir(parents=True, exist_ok=True)

    summaries, details = {}, {}
    for level in args.levels.split(","):
        label = "Clean" if level == "clean" else f"{level} dB"
        t0 = time.perf_counter()
        data = desk.dataset(level, seed=args.seed, segments_per_class=args.segments_per_class)
        result = run_cv(data, args.folds, desk.schedule(args.epochs, args.seed),
                        desk.model_config(), seed=args.seed)
        summaries[label] = result.summary
        details[label] = {"summary": result.summary,
                          "mean_confusion": mean_confusion(result.reports).tolist(),
                          "seconds": round(time.perf_counter() - t0, 1)}
        print(f"{label}: accuracy {100 * result.summary['accuracy'][0]:.1f}%", flush=True)

    table = format_table(summaries)
    print(table)
    (args.out / "metrics_table.md").write_text(table + "\n")
    (args.out / "sweep.json").write_text(json.dumps(details, indent=2))


if __name__ == "__main__":
    main()
