"""Command-line interface: ``vibdiag <command> [options]``.

Every command writes ``manifest.json`` into its output directory recording
the full argument set (output location excepted), so
``vibdiag replay <manifest> [--out DIR]`` re-executes it.
Failures exit nonzero with a JSON error object on stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import desk
from .archive import load_archive, read_manifest, save_archive
from .dsp import NoiseSpec, SegmentTensor, add_noise, nuft_psd, power_fraction_below, \
    resample, segment, segment_length_for_rate, standardize
from .evaluation import EvalReport, format_table, latency_bench, mean_confusion, throughput_bench
from .model import ModelConfig, load_checkpoint, predict, save_checkpoint
from .signals import HealthState, SynthConfig, load_record, load_speed_trace, save_record, \
    save_speed_trace, synth_record
from .ssa import run_ssa
from .training import FoldPlan, TrainSchedule, run_cv

log = logging.getLogger("vibdiag")


def _version() -> str:
    try:
        return metadata.version("vibdiag")
    except metadata.PackageNotFoundError:
        return "unknown"


@dataclass
class RunConfig:
    command: str
    args: dict
    seed: int
    version: str = field(default_factory=_version)

    def write(self, out_dir: Path, outputs: dict | None = None) -> None:
        payload = asdict(self)
        payload["outputs"] = outputs or {}
        with open(out_dir / "manifest.json", "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _record_run(args, outputs: dict) -> None:
    params = {k: v for k, v in vars(args).items() if k not in ("func", "out", "seed", "verbose")}
    RunConfig(args.command, params, args.seed).write(Path(args.out), outputs)


def _parse_profile(text: str):
    knots = []
    for item in text.split(","):
        t, rpm = item.split(":")
        knots.append((float(t), float(rpm)))
    return tuple(knots)


# ----------------------------------------------------------------- commands

def cmd_synth(args) -> dict:
    out = _out_dir(args)
    if args.desk:
        cfg = desk.synth_config(args.seed, args.segments_per_class)
    else:
        cfg = SynthConfig(seed=args.seed, duration_s=args.duration,
                          sample_rate_hz=args.sample_rate, resonance_hz=args.resonance)
        if args.rpm_profile:
            cfg.speed_profile = _parse_profile(args.rpm_profile)
    suffix = ".f32" if args.layout == "raw" else ".csv"
    counts = {}
    for state in HealthState:
        record, trace = synth_record(cfg, state)
        save_record(record, out / f"{state.title}{suffix}", args.layout)
        save_speed_trace(trace, out / f"{state.title}_speed.csv")
        counts[state.title] = record.n_samples
        print(f"{state.title}: {record.n_samples} samples @ {record.sample_rate_hz:g} Hz")
    outputs = {"synth_config": asdict(cfg), "samples_per_class": counts}
    _record_run(args, outputs)
    return outputs


def _discover_records(input_dir: Path):
    records = []
    for meta_path in sorted(input_dir.glob("*.json")):
        if meta_path.name == "manifest.json":
            continue
        with open(meta_path) as fh:
            meta = json.load(fh)
        if "sample_rate_hz" not in meta:
            continue
        layout = meta.get("layout", "raw")
        candidates = [p for p in input_dir.glob(meta_path.stem + ".*") if p.suffix != ".json"]
        if not candidates:
            raise FileNotFoundError(f"no data file for manifest {meta_path}")
        records.append(load_record(candidates[0], layout))
    if not records:
        raise FileNotFoundError(f"no records with manifests in {input_dir}")
    return records


def cmd_preprocess(args) -> dict:
    out = _out_dir(args)
    levels = [s.strip() for s in str(args.snr).split(",")]
    parts = []
    for r, record in enumerate(_discover_records(Path(args.input))):
        try:
            if args.target_hz and args.target_hz != record.sample_rate_hz:
                record = resample(record, args.target_hz)
            for lv, level in enumerate(levels):
                spec = NoiseSpec.parse(level, seed=(args.seed, r, lv))
                parts.append(standardize(segment(add_noise(record, spec), args.segment_len)))
        except ValueError as exc:
            raise ValueError(f"{record.source_id}: {exc}") from exc
    tensor = SegmentTensor.concat(parts)
    clean = all(NoiseSpec.parse(level).is_clean for level in levels)
    meta = {"snr": levels, "clean": clean, "seed": args.seed, "target_hz": args.target_hz}
    save_archive(tensor, out, meta)
    outputs = {"n_segments": tensor.n_segments,
               "class_counts": np.bincount(tensor.labels, minlength=4).tolist(), "clean": clean}
    print(json.dumps(outputs))
    _record_run(args, outputs)
    return outputs


def _model_config_from(args, input_length: int) -> ModelConfig:
    if args.desk_model:
        cfg = desk.model_config()
        cfg.input_length = input_length
        return cfg
    return ModelConfig(input_length=input_length, filters_per_block=args.filters,
                       dense_units=args.dense_units, dropout_rate=args.dropout)


def cmd_train(args) -> dict:
    out = _out_dir(args)
    data = load_archive(args.archive)
    schedule = TrainSchedule(epochs=args.epochs, batch_size=args.batch_size, lr_phase1=args.lr1,
                             lr_phase2=args.lr2, lr_switch_epoch=args.lr_switch_epoch,
                             shuffle_seed=args.seed)
    model_cfg = _model_config_from(args, data.segment_len)

    def on_fold(i, res):
        save_checkpoint(res.params, out / f"fold{i}.ckpt", {"fold": i, "seed": args.seed})
        res.report.to_json(out / f"fold{i}_report.json")
        res.report.confusion.to_csv(out / f"fold{i}_confusion.csv")
        with open(out / f"fold{i}_loss.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "lr", "loss"])
            for e, (lr, value) in enumerate(zip(res.lr_trace, res.loss_curve), start=1):
                w.writerow([e, repr(lr), repr(value)])
        print(f"fold {i}: accuracy {res.report.metrics.accuracy:.4f}", flush=True)

    result = run_cv(data, args.folds, schedule, model_cfg, seed=args.seed, on_fold=on_fold)
    with open(out / "folds.json", "w") as fh:
        json.dump(result.plan.as_dict(), fh)
    label = read_manifest(args.archive).get("snr", ["?"])
    label = ",".join(map(str, label))
    with open(out / "metrics_table.md", "w") as fh:
        fh.write(format_table({label: result.summary}) + "\n")
    np.savetxt(out / "confusion_mean.csv", mean_confusion(result.reports), delimiter=",",
               fmt="%.2f")
    outputs = {"summary": {k: list(v) for k, v in result.summary.items()},
               "model_config": model_cfg.to_dict(), "schedule": asdict(schedule),
               "fold_metrics": [r.metrics.as_dict() for r in result.reports]}
    with open(out / "summary.json", "w") as fh:
        json.dump(outputs, fh, indent=2, sort_keys=True)
    print(format_table({label: result.summary}))
    _record_run(args, outputs)
    return outputs


def cmd_eval(args) -> dict:
    out = _out_dir(args)
    params, extra = load_checkpoint(args.checkpoint)
    indices = None
    if args.folds_file:
        with open(args.folds_file) as fh:
            plan = FoldPlan.from_dict(json.load(fh))
        fold = args.fold if args.fold is not None else extra.get("fold", 0)
        indices = plan.test_indices(fold)
    data = load_archive(args.archive, indices)
    report = EvalReport.from_predictions(predict(params, data.as_batch()), data.labels,
                                         params.config.num_classes)
    report.to_json(out / "eval_report.json")
    report.confusion.to_csv(out / "confusion.csv")
    outputs = report.as_dict()
    print(json.dumps(outputs["metrics"]))
    _record_run(args, outputs)
    return outputs


def cmd_ssa(args) -> dict:
    out = _out_dir(args)
    data = load_archive(args.archive)
    sensors = tuple(int(s) for s in str(args.sensors).split(","))
    report = run_ssa(data, sensors, args.nfft, args.psd_smooth, args.eps, args.ssa_smooth)
    report.write(out)
    outputs = report.as_dict()
    for pair in outputs["pairs"]:
        bands = ", ".join(f"{b['start_hz']:.0f}-{b['end_hz']:.0f} Hz" for b in pair["bands"]) or "none"
        print(f"sensor {pair['sensor']} {pair['class_i']}/{pair['class_j']}: {bands}")
    _record_run(args, outputs)
    return outputs


def cmd_bench(args) -> dict:
    out = _out_dir(args)
    params, _ = load_checkpoint(args.checkpoint)
    cfg = params.config
    if args.archive:
        data = load_archive(args.archive).as_batch()[:args.samples]
        fs = read_manifest(args.archive)["sample_rate_hz"]
    else:
        rng = np.random.default_rng(args.seed)
        data = rng.standard_normal((args.samples, cfg.input_length, cfg.input_channels))
        fs = args.sample_rate
    stats = latency_bench(params, data, args.repetitions, threads=1)
    segment_s = cfg.input_length / fs
    outputs = {"latency": stats.as_dict(), "segment_duration_s": segment_s,
               "real_time_factor": stats.real_time_factor(segment_s)}
    if args.throughput:
        outputs["throughput"] = throughput_bench(params, data, threads=args.threads).as_dict()
    with open(out / "latency.json", "w") as fh:
        json.dump(outputs, fh, indent=2)
    print(f"mean {stats.mean_ms:.3f} ms ± {stats.std_ms:.3f} per segment "
          f"(real-time factor {outputs['real_time_factor']:.3f})")
    _record_run(args, {k: v for k, v in outputs.items() if k != "latency"})
    return outputs


def cmd_speed(args) -> dict:
    out = _out_dir(args)
    trace = load_speed_trace(args.trace)
    psd = nuft_psd(trace, args.f_scale, args.f_max)
    psd.to_csv(out / "nuft_psd.csv")
    frac = power_fraction_below(psd, args.f_cut)
    outputs = {"power_fraction_below_cut": frac, "f_cut_hz": args.f_cut,
               "recommended_segment_len": segment_length_for_rate(args.f_cut, args.sample_rate),
               "peak_hz": float(psd.frequencies_hz[np.argmax(psd.power_db)])}
    with open(out / "speed_report.json", "w") as fh:
        json.dump(outputs, fh, indent=2)
    print(json.dumps(outputs))
    _record_run(args, outputs)
    return outputs


def cmd_replay(args) -> dict:
    with open(args.manifest) as fh:
        stored = json.load(fh)
    argv = [stored["command"]]
    parser = build_parser()
    sub = parser.subcommands[stored["command"]]
    dests = {a.dest: a for a in sub._actions}
    for key, value in stored["args"].items():
        if key == "command" or key not in dests or value is None:
            continue
        action = dests[key]
        flag = action.option_strings[0]
        if isinstance(action, argparse._StoreTrueAction):
            if value:
                argv.append(flag)
        else:
            argv += [flag, str(value)]
    out = args.out or str(Path(args.manifest).parent)
    argv += ["--seed", str(stored["seed"]), "--out", out]
    new_args = parser.parse_args(argv)
    return new_args.func(new_args)


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vibdiag", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommands = {}

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        parser.subcommands[name] = p
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=name != "replay", default=None)
        return p

    p = add("synth", cmd_synth, "generate a synthetic 4-class dataset")
    p.add_argument("--desk", action="store_true", help="use the desk-scale preset")
    p.add_argument("--segments-per-class", type=int, default=desk.SEGMENTS_PER_CLASS)
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--sample-rate", type=float, default=25_600.0)
    p.add_argument("--resonance", type=float, default=3000.0)
    p.add_argument("--rpm-profile", default=None, help="knots as t:rpm,t:rpm,...")
    p.add_argument("--layout", choices=("raw", "csv"), default="raw")

    p = add("preprocess", cmd_preprocess, "resample, add noise, segment and standardise")
    p.add_argument("--input", required=True)
    p.add_argument("--snr", default="clean", help="dB value, 'clean', or a comma list (mixed SNR)")
    p.add_argument("--segment-len", type=int, default=2000)
    p.add_argument("--target-hz", type=float, default=20_000.0)

    p = add("train", cmd_train, "stratified k-fold training")
    p.add_argument("--archive", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--lr1", type=float, default=1e-5)
    p.add_argument("--lr2", type=float, default=1e-6)
    p.add_argument("--lr-switch-epoch", type=int, default=101)
    p.add_argument("--filters", type=int, default=64)
    p.add_argument("--dense-units", type=int, default=128)
    p.add_argument("--dropout", type=float, default=0.4)
    p.add_argument("--desk-model", action="store_true", help="use the desk-scale network size")

    p = add("eval", cmd_eval, "evaluate a checkpoint on an archive")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--archive", required=True)
    p.add_argument("--folds-file", default=None)
    p.add_argument("--fold", type=int, default=None)

    p = add("ssa", cmd_ssa, "spectral separability analysis")
    p.add_argument("--archive", required=True)
    p.add_argument("--nfft", type=int, default=1024)
    p.add_argument("--psd-smooth", type=int, default=16)
    p.add_argument("--ssa-smooth", type=int, default=64)
    p.add_argument("--eps", type=float, default=2.0)
    p.add_argument("--sensors", default="0,1")

    p = add("bench", cmd_bench, "single-segment inference latency")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--archive", default=None)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--repetitions", type=int, default=10)
    p.add_argument("--sample-rate", type=float, default=20_000.0)
    p.add_argument("--throughput", action="store_true", help="also run batched multi-threaded mode")
    p.add_argument("--threads", type=int, default=None)

    p = add("speed", cmd_speed, "NUFT analysis of a speed trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--f-scale", type=float, default=12.5)
    p.add_argument("--f-max", type=float, default=None)
    p.add_argument("--f-cut", type=float, default=10.0)
    p.add_argument("--sample-rate", type=float, default=20_000.0)

    p = add("replay", cmd_replay, "re-run a command from its manifest.json")
    p.add_argument("manifest")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        args.func(args)
    except Exception as exc:  # report every failure as machine-readable JSON
        json.dump({"error": type(exc).__name__, "message": str(exc), "command": args.command},
                  sys.stderr)
        sys.stderr.write("\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
