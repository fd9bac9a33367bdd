"""Command-line entry point: ``roar {synth,train,eval,noise-sweep,ablate,plot}``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 runtime error.
"""
import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

from . import kernels
from .data import (
    DatasetError,
    NoiseConfig,
    SynthConfig,
    add_gaussian_noise,
    read_dataset,
    split_dataset,
    summarize,
    synth_generate,
    write_dataset,
)
from .metrics import MetricError, evaluate, scores_from_traces, tta_at_threshold
from .model import (
    ABLATIONS,
    CheckpointError,
    DimensionError,
    check_params,
    config_from_params,
    load_checkpoint,
    predict,
)
from .plot import TraceFormatError, plot_trace, write_trace_csv
from .trainer import ConfigError, TrainConfig, read_config, train

EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 2, 3, 4
DEFAULT_VARIANCES = "0.1,0.2,0.5,1.5,5.0,20.0"

log = logging.getLogger("roar")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def resolve_seed(flag, default=0):
    if flag is not None:
        return flag
    env = os.environ.get("ROAR_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"ROAR_SEED must be an integer, got {env!r}") from None
    return default


def echo_config(command, items):
    print(f"[{command}] backend={kernels.BACKEND}")
    for k, v in items:
        print(f"[{command}] {k}={v}")


def load_train_config(path, seed=None):
    try:
        cfg = read_config(path) if path else TrainConfig()
    except FileNotFoundError:
        raise DataError(f"config file not found: {path}") from None
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    cfg.seed = resolve_seed(seed, cfg.seed)
    return cfg


def load_samples(path):
    try:
        return read_dataset(path)
    except FileNotFoundError:
        raise DataError(f"dataset not found: {path}") from None


def select_split(samples, which, cfg):
    if which == "all":
        return samples
    tr, held = split_dataset(samples, 1.0 - cfg.val_fraction, seed=cfg.seed)
    return tr if which == "train" else held


def model_config_for(params, cfg):
    try:
        mcfg = config_from_params(
            params,
            N=cfg.N,
            wavelet_mode=cfg.wavelet_mode,
            threshold=cfg.threshold,
            disabled=frozenset(d for d in cfg.disable if d != "focal"),
        )
        check_params(params, mcfg)
    except (KeyError, DimensionError) as exc:
        raise DataError(f"checkpoint does not describe a model: {exc}") from None
    return mcfg


def run_eval(samples, params, mcfg):
    traces = predict(samples, params, mcfg)
    scores = scores_from_traces(samples, traces)
    return evaluate(scores), scores, traces


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_synth(args):
    if args.videos < 1:
        raise DataError(f"refusing to write an empty dataset (--videos {args.videos})")
    if not 0.0 <= args.positive_rate <= 1.0:
        raise UsageError(f"--positive-rate must lie in [0, 1], got {args.positive_rate}")
    cfg = SynthConfig(
        videos=args.videos,
        positive_rate=args.positive_rate,
        T=args.frames,
        fps=args.fps,
        D_img=args.d_img,
        D_obj=args.d_obj,
        N=args.objects,
        ramp=args.ramp,
        signal=args.signal,
        hf_signal=args.hf_signal,
        obj_signal=args.obj_signal,
        seed=resolve_seed(args.seed),
    )
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    echo_config("synth", asdict(cfg).items())
    samples = synth_generate(cfg)
    try:
        digest = write_dataset(samples, args.out)
    except OSError as exc:
        raise DataError(f"cannot write {args.out}: {exc}") from None
    s = summarize(samples)
    print(
        f"wrote {args.out}: videos={s['videos']} positives={s['positives']} "
        f"positive_rate={s['positive_rate']:.4f} T={s['T']} N={s['N']} "
        f"D_img={s['D_img']} D_obj={s['D_obj']} fps={s['fps']} sha256={digest}"
    )
    return 0


def cmd_train(args):
    cfg = load_train_config(args.config, args.seed)
    echo_config("train", cfg.items())
    samples = load_samples(args.data)
    tr, held = split_dataset(samples, 1.0 - cfg.val_fraction, seed=cfg.seed) if cfg.val_fraction else (samples, [])
    try:
        params, history = train(tr, cfg, held, checkpoint_path=args.out)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    log_path = args.log or str(args.out) + ".log.csv"
    history.write_csv(log_path)
    last = history[-1]
    print(
        f"trained {len(history)} epochs on {len(tr)} videos; final loss={last.loss_total:.4f} "
        f"val_ap={last.val_ap:.4f} val_mtta={last.val_mtta:.4f}; checkpoint={args.out} log={log_path}"
    )
    return 0


def _load_ckpt(path):
    try:
        return load_checkpoint(path)
    except FileNotFoundError:
        raise DataError(f"checkpoint not found: {path}") from None


def cmd_eval(args):
    cfg = load_train_config(args.config, args.seed)
    if not 0.0 < args.threshold < 1.0:
        raise UsageError("--threshold must lie in (0, 1)")
    echo_config("eval", [("threshold", args.threshold), ("split", args.split), *cfg.items()])
    params = _load_ckpt(args.checkpoint)
    mcfg = model_config_for(params, cfg)
    samples = select_split(load_samples(args.data), args.split, cfg)
    report, scores, traces = run_eval(samples, params, mcfg)
    out = Path(args.out_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "pr.csv")
    for s, tr in zip(samples, traces):
        write_trace_csv(out / "traces" / f"{s.id}.csv", tr, s.label, s.toa)
    tta = tta_at_threshold(scores, args.threshold)
    print(report.summary())
    print(f"TTA@{args.threshold:g}={'n/a' if tta is None else f'{tta:.4f}'} videos={len(samples)} out={out}")
    return 0


def cmd_noise_sweep(args):
    cfg = load_train_config(args.config, args.seed)
    try:
        variances = [float(v) for v in args.variances.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad --variances {args.variances!r}") from None
    if any(v < 0 for v in variances):
        raise UsageError("noise variances must be >= 0")
    echo_config("noise-sweep", [("variances", variances), ("target", args.target), *cfg.items()])
    params = _load_ckpt(args.checkpoint)
    mcfg = model_config_for(params, cfg)
    samples = select_split(load_samples(args.data), args.split, cfg)
    rows = []
    for var in [0.0] + variances:
        noisy = add_gaussian_noise(samples, NoiseConfig(variance=var, seed=cfg.seed, target=args.target))
        report, _, _ = run_eval(noisy, params, mcfg)
        rows.append((var, report.ap, report.mtta))
        print(f"variance={var:g} AP={report.ap:.4f} mTTA={report.mtta:.4f}")
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variance", "ap", "mtta"])
        for var, ap, mt in rows:
            w.writerow([repr(var), repr(ap), repr(mt)])
    print(f"wrote {args.out}")
    return 0


def _ablation_run(variant, cfg, train_set, held):
    disabled = tuple(v for v in variant.split("+") if v != "full")
    vcfg = replace(cfg, disable=tuple(sorted(set(cfg.disable) | set(disabled))))
    params, _ = train(train_set, vcfg, held)
    mcfg = vcfg.model_config(train_set[0].D_img, train_set[0].D_obj, train_set[0].fps)
    report, _, _ = run_eval(held, params, mcfg)
    return variant, report.ap, report.mtta, report.tta_r80


def cmd_ablate(args):
    cfg = load_train_config(args.config, args.seed)
    variants = [v.strip() for v in args.disable.split(",") if v.strip()]
    for v in variants:
        bad = [p for p in v.split("+") if p not in ABLATIONS]
        if bad:
            raise UsageError(f"unknown ablation {', '.join(bad)}; choose from {', '.join(ABLATIONS)}")
    variants = ["full"] + variants
    echo_config("ablate", [("variants", variants), ("jobs", args.jobs), *cfg.items()])
    samples = load_samples(args.data)
    train_set, held = split_dataset(samples, 1.0 - cfg.val_fraction, seed=cfg.seed)
    if not held:
        raise DataError("ablation needs a held-out split (val_fraction > 0)")
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = {v: pool.submit(_ablation_run, v, cfg, train_set, held) for v in variants}
            results = {v: f.result() for v, f in futures.items()}
    else:
        results = {v: _ablation_run(v, cfg, train_set, held) for v in variants}
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "ap", "mtta", "tta_r80"])
        for v in variants:
            _, ap, mt, r80 = results[v]
            w.writerow([v, repr(ap), repr(mt), "" if r80 is None else repr(r80)])
            print(f"{v}: AP={ap:.4f} mTTA={mt:.4f}")
    print(f"wrote {args.out}")
    return 0


def cmd_plot(args):
    echo_config("plot", [("trace", args.trace), ("threshold", args.threshold)])
    plot_trace(args.trace, args.out, threshold=args.threshold)
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="roar", description="Accident anticipation toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic ROARFT01 dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--videos", type=int, required=True)
    p.add_argument("--positive-rate", type=float, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--frames", type=int, default=50)
    p.add_argument("--fps", type=int, default=10)
    p.add_argument("--d-img", type=int, default=64)
    p.add_argument("--d-obj", type=int, default=32)
    p.add_argument("--objects", type=int, default=5)
    defaults = SynthConfig()
    p.add_argument("--ramp", type=int, default=defaults.ramp, help="risk ramp width in frames (default: whole video)")
    p.add_argument("--signal", type=float, default=defaults.signal)
    p.add_argument("--hf-signal", type=float, default=defaults.hf_signal)
    p.add_argument("--obj-signal", type=float, default=defaults.obj_signal)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    def eval_common(p):
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--config")
        p.add_argument("--seed", type=int)
        p.add_argument("--split", choices=("all", "train", "heldout"), default="all")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    eval_common(p)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out-dir", default="eval_out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("noise-sweep", help="evaluate under Gaussian feature noise")
    eval_common(p)
    p.add_argument("--variances", default=DEFAULT_VARIANCES)
    p.add_argument("--target", choices=("image", "object", "both"), default="both")
    p.add_argument("--out", default="noise_sweep.csv")
    p.set_defaults(func=cmd_noise_sweep)

    p = sub.add_parser("ablate", help="train and evaluate ablated variants")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--disable", required=True, help=f"comma list of {', '.join(ABLATIONS)}; join with + to combine")
    p.add_argument("--out", default="ablation.csv")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("plot", help="render a trace CSV as SVG")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DatasetError, DimensionError, CheckpointError, MetricError, TraceFormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - top-level guard maps to an exit code
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
