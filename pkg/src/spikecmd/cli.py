"""Command-line experiment runner.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

import argparse
import os
import sys

from . import data as data_io
from .config import ConfigError, ExperimentConfig, load_config
from .energy import EnergyModel, published_workload_report
from .experiment import (TrainingAborted, compare_decoding, energy_report, evaluate, load_run,
                         make_datasets, seed_streams, train)
from .network import init_params


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _common(p):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--task", choices=["regression", "detection"], help="start from this task's preset")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")


def build_parser():
    parser = _Parser(prog="spikecmd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a network and write metrics.csv + checkpoint.bin")
    _common(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help="dataset file (default: regenerate the configured eval split)")
    p.add_argument("--split", choices=["eval", "train"], default="eval")
    p.add_argument("--decoding", choices=["cmd", "rate"], help="override the decoding head")
    p.add_argument("--out")

    p = sub.add_parser("energy", help="operation counts and energy estimates")
    _common(p)
    p.add_argument("--checkpoint", help="use trained parameters instead of a fresh initialization")
    p.add_argument("--sample-index", type=int, default=0)
    p.add_argument("--paper-numbers", action="store_true",
                   help="cost the published ANN/SNN FLOP figures instead of a local network")
    p.add_argument("--time-steps", default=None, help="comma list of T values for --paper-numbers (default 4,6)")

    p = sub.add_parser("compare-decoding", help="paired cmd vs rate training runs")
    _common(p)
    p.add_argument("--arms", default="cmd,rate", help="comma list of decoding modes, one run each")

    p = sub.add_parser("gen-data", help="write a synthetic dataset file")
    _common(p)
    p.add_argument("--split", choices=["train", "eval"], default="train")
    p.add_argument("--path", help="output file (default OUT/<split>.snnds)")
    return parser


def resolve_config(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
        if args.task and args.task != cfg.experiment.task:
            raise ConfigError("--task conflicts with experiment.task in the config file")
    else:
        cfg = ExperimentConfig.for_task(args.task or "regression")
    for pair in args.set:
        if "=" not in pair:
            raise ConfigError(f"--set expects KEY=VALUE, got {pair!r}")
        k, v = pair.split("=", 1)
        cfg.set(k.strip(), v)
    if args.seed is not None:
        cfg.experiment.seed = args.seed
    if args.out:
        cfg.experiment.out_dir = args.out
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    return cfg.validate()


def _write(path, text):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as f:
        f.write(text)


def cmd_train(args):
    cfg = resolve_config(args)
    out = cfg.experiment.out_dir
    try:
        result = train(cfg, out_dir=out, threads=args.threads, log=print)
    except TrainingAborted as e:
        print(f"aborted: {e}; last good checkpoint kept in {out}", file=sys.stderr)
        return 2
    print(f"initial_eval_metric = {result.initial_eval!r}")
    print(f"final_eval_metric = {result.final_eval!r}")
    return 0


def cmd_eval(args):
    cfg, params, norm = load_run(args.checkpoint)
    if args.decoding:
        cfg.network.decoding = args.decoding
    if args.data:
        ds = data_io.load_dataset(args.data)
        if ds.kind != cfg.experiment.task:
            raise UsageError(f"dataset kind {ds.kind} does not match task {cfg.experiment.task}")
        if ds.images.shape[1:] != cfg.input_shape():
            raise UsageError(f"dataset images {ds.images.shape[1:]} do not match network input {cfg.input_shape()}")
    else:
        train_ds, eval_ds = make_datasets(cfg)
        ds = eval_ds if args.split == "eval" else train_ds
    if len(ds) == 0:
        raise UsageError("empty dataset")
    metric, rate = evaluate(cfg, params, ds, norm)
    name = "mse" if cfg.experiment.task == "regression" else "toy_map_iou50"
    text = f"metric = {name}\neval_metric = {metric!r}\nspike_rate_mean = {rate!r}\nsamples = {len(ds)}\n"
    print(text, end="")
    if args.out:
        _write(os.path.join(args.out, "eval.txt"), text)
    return 0


def cmd_energy(args):
    cfg = resolve_config(args)
    out = cfg.experiment.out_dir
    model = EnergyModel()
    if args.paper_numbers:
        steps = [int(t) for t in (args.time_steps or "4,6").split(",")]
        texts, csvs = [], []
        for t in steps:
            report = published_workload_report(t, model)
            texts.append(report.to_text())
            csvs.append(report.to_csv() if not csvs else report.to_csv().split("\n", 1)[1])
            print(f"T={t}: per-op ANN/SNN ratio = {report.ratio('per_op', 'snn_static'):.2f}, "
                  f"chip ratio = {report.ratio('chip', 'snn_static'):.2f}")
        _write(os.path.join(out, "energy_report.txt"), "\n".join(texts))
        _write(os.path.join(out, "energy_report.csv"), "".join(csvs))
        return 0
    if args.checkpoint:
        cfg, params, norm = load_run(args.checkpoint)
        train_ds, eval_ds = make_datasets(cfg)
    else:
        data_rng, init_rng, _ = seed_streams(cfg.experiment.seed)
        train_ds, eval_ds = make_datasets(cfg, data_rng)
        norm = train_ds.channel_stats()
        params = init_params(cfg.network_spec(), init_rng, cfg.network.init_gain)
    if not 0 <= args.sample_index < len(eval_ds):
        raise UsageError(f"--sample-index outside [0, {len(eval_ds)})")
    images = eval_ds.images[args.sample_index:args.sample_index + 1]
    report, stats = energy_report(cfg, params, norm, images, model)
    _write(os.path.join(out, "energy_report.txt"), report.to_text())
    _write(os.path.join(out, "energy_report.csv"), report.to_csv())
    print(report.to_text(), end="")
    return 0


def cmd_compare_decoding(args):
    cfg = resolve_config(args)
    arms = [a.strip() for a in args.arms.split(",") if a.strip()]
    for a in arms:
        if a not in ("cmd", "rate"):
            raise ConfigError(f"unknown decoding arm {a!r}")
    results, text = compare_decoding(cfg, arms, threads=args.threads)
    _write(os.path.join(cfg.experiment.out_dir, "compare_decoding.csv"), text)
    for a, r in zip(arms, results):
        print(f"{a}: initial {r.initial_eval!r} final {r.final_eval!r}")
    return 0


def cmd_gen_data(args):
    cfg = resolve_config(args)
    train_ds, eval_ds = make_datasets(cfg)
    ds = train_ds if args.split == "train" else eval_ds
    path = args.path or os.path.join(cfg.experiment.out_dir, f"{args.split}.snnds")
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    data_io.save_dataset(path, ds)
    print(f"wrote {len(ds)} {ds.kind} samples to {path}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "energy": cmd_energy,
    "compare-decoding": cmd_compare_decoding,
    "gen-data": cmd_gen_data,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 1
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError, FloatingPointError) as e:
        print(f"runtime failure: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
