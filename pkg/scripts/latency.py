#!/usr/bin/env python3
"""Single-segment latency of the full-size network, with an optional batched
throughput comparison."""
import argparse
import json

import numpy as np

from vibdiag.evaluation import latency_bench, throughput_bench
from vibdiag.model import ModelConfig, build


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=1000)
    ap.add_argument("--repetitions", type=int, default=10)
    ap.add_argument("--filters", type=int, default=64)
    ap.add_argument("--float32", action="store_true")
    ap.add_argument("--throughput", action="store_true")
    args = ap.parse_args()

    cfg = ModelConfig(filters_per_block=args.filters)
    params, _ = build(cfg, seed=0)
    if args.float32:
        params = params.astype(np.float32)
    x = np.random.default_rng(0).standard_normal((args.samples, cfg.input_length, 2))
    stats = latency_bench(params, x, args.repetitions)
    out = {"parameters": params.count(), "latency": stats.as_dict(),
           "real_time_factor": stats.real_time_factor(cfg.input_length / 20_000.0)}
    if args.throughput:
        out["throughput"] = throughput_bench(params, x).as_dict()
    out["latency"].pop("per_repetition_ms")
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
