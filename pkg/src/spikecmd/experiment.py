"""Training, evaluation and energy-profiling runs driven by an ExperimentConfig."""

import csv
import io
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import checkpoint as ckpt_io
from .config import ExperimentConfig, copy_config, from_text
from .data import Dataset, generate_synthetic_detection, generate_synthetic_regression
from .detection import LossWeights, detection_loss, toy_map
from .energy import (EnergyModel, SpikeStats, build_report, count_ann_ops,
                     count_snn_ops_activity, count_snn_ops_static)
from .network import forward, init_params, param_names
from .training import OptimizerState, ScheduleState, augment_batch, cosine_lr, normalize, sgd_step

METRICS_HEADER = ["epoch", "train_loss", "eval_metric", "lr", "spike_rate_mean"]


class TrainingAborted(RuntimeError):
    """Loss or gradient became non-finite; ``result`` holds the last good state."""

    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


@dataclass
class MetricsRow:
    epoch: int
    train_loss: float
    eval_metric: float
    lr: float
    spike_rate_mean: float
    wall_time: float = 0.0

    def csv_fields(self):
        return [str(self.epoch)] + [repr(float(v)) for v in
                                    (self.train_loss, self.eval_metric, self.lr, self.spike_rate_mean)]


@dataclass
class RunResult:
    config: ExperimentConfig
    params: dict
    velocity: dict
    norm: tuple
    rows: list = field(default_factory=list)
    initial_eval: float = float("nan")
    epoch: int = 0
    rng_state: dict = None

    @property
    def final_eval(self):
        return self.rows[-1].eval_metric if self.rows else self.initial_eval

    def checkpoint(self) -> ckpt_io.Checkpoint:
        mean, std = self.norm
        return ckpt_io.Checkpoint(
            portable_config_text(self.config), dict(self.params), dict(self.velocity),
            {"norm.mean": mean, "norm.std": std}, self.epoch, self.rng_state,
        )

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for row in self.rows:
            w.writerow(row.csv_fields())
        return buf.getvalue()


def portable_config_text(cfg: ExperimentConfig) -> str:
    """Config text without the output location, so runs are comparable across directories."""
    return "".join(line for line in cfg.to_text().splitlines(True)
                   if not line.startswith("experiment.out_dir "))


def seed_streams(seed: int):
    """Independent generators for data, initialization and training order."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]


def make_datasets(cfg: ExperimentConfig, rng=None):
    if rng is None:
        rng = seed_streams(cfg.experiment.seed)[0]
    d = cfg.data
    if cfg.experiment.task == "regression":
        gen = lambda n: generate_synthetic_regression(rng, n, d.image_size, d.min_size, d.max_size, d.noise)
    else:
        gen = lambda n: generate_synthetic_detection(
            rng, n, d.grid, d.num_classes, d.image_size, d.channels, d.max_objects,
            d.min_size, d.max_size, d.noise)
    return gen(d.n_train), gen(d.n_eval)


def loss_weights(cfg: ExperimentConfig):
    l = cfg.loss
    return LossWeights(l.coord, l.obj, l.noobj, l.cls)


def _shard_loss(spec, params, x, y, cfg, frac):
    tape = ad.Tape()
    out = forward(spec, params, x, tape=tape)
    if cfg.experiment.task == "regression":
        loss = ad.mse(out, y)
    else:
        loss = detection_loss(out, y, cfg.data.num_classes, loss_weights(cfg))
    loss = ad.mul(loss, frac)
    return float(loss.value), tape.gradients(loss)


def loss_and_grads(spec, params, x, y, cfg: ExperimentConfig, threads: int = 1):
    """Batch-mean loss and gradients; shards are merged in a fixed order."""
    n = len(x)
    if threads <= 1 or n < 2:
        return _shard_loss(spec, params, x, y, cfg, 1.0)
    bounds = np.linspace(0, n, min(threads, n) + 1).astype(int)
    jobs = [(x[a:b], y[a:b], (b - a) / n) for a, b in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=len(jobs)) as pool:
        parts = list(pool.map(lambda j: _shard_loss(spec, params, j[0], j[1], cfg, j[2]), jobs))
    loss = sum(p[0] for p in parts)
    grads = {k: sum(p[1][k] for p in parts) for k in parts[0][1]}
    return loss, grads


def evaluate(cfg: ExperimentConfig, params, ds: Dataset, norm, batch_size: int = 128):
    """Eval metric (MSE or toy-mAP) and mean firing rate over all IF layers."""
    spec = cfg.network_spec()
    if len(ds) == 0:
        raise ValueError("evaluate: empty dataset")
    x = normalize(ds.images, *norm)
    outs, spikes, neurons = [], 0.0, 0.0
    for i in range(0, len(x), batch_size):
        trace = []
        outs.append(forward(spec, params, x[i:i + batch_size], trace=trace))
        spikes += sum(float(t.sum()) for t in trace)
        neurons += sum(float(t.size) for t in trace)
    pred = np.concatenate(outs)
    if cfg.experiment.task == "regression":
        metric = float(np.mean((pred - ds.targets) ** 2))
    else:
        metric = toy_map(pred, ds.targets, cfg.data.num_classes)
    return metric, spikes / neurons if neurons else 0.0


def _all_finite(loss, grads):
    return np.isfinite(loss) and all(np.all(np.isfinite(g)) for g in grads.values())


def train(cfg: ExperimentConfig, out_dir=None, threads: int = 1, log=None) -> RunResult:
    """Train per ``cfg``; writes metrics.csv, timing.csv, summary.txt and checkpoint.bin to ``out_dir``."""
    cfg = copy_config(cfg).validate()
    spec = cfg.network_spec()
    data_rng, init_rng, train_rng = seed_streams(cfg.experiment.seed)
    train_ds, eval_ds = make_datasets(cfg, data_rng)
    norm = train_ds.channel_stats()
    params = init_params(spec, init_rng, cfg.network.init_gain)
    decay = frozenset(n for n in param_names(spec) if n.endswith(".weight"))
    o = cfg.optim
    opt = OptimizerState(o.momentum, o.base_lr, o.weight_decay, decay_params=decay)
    result = RunResult(cfg, params, {}, norm)
    result.initial_eval, _ = evaluate(cfg, params, eval_ds, norm)
    result.rng_state = train_rng.bit_generator.state

    writer = _RunWriter(out_dir) if out_dir else None
    n = len(train_ds)
    start = time.perf_counter()
    try:
        for epoch in range(1, o.epochs + 1):
            lr = cosine_lr(ScheduleState(epoch - 1, o.epochs, o.base_lr, o.min_lr))
            perm = train_rng.permutation(n)
            total = 0.0
            for b in range(0, n, o.batch_size):
                idx = perm[b:b + o.batch_size]
                if cfg.data.augment:
                    x, y = augment_batch(train_ds.images[idx], train_ds.targets[idx], cfg.experiment.task,
                                         train_rng, *norm, flip_prob=cfg.data.flip_prob)
                else:
                    x, y = normalize(train_ds.images[idx], *norm), train_ds.targets[idx]
                # overflow is caught explicitly below, so silence numpy's warnings
                with np.errstate(over="ignore", invalid="ignore"):
                    loss, grads = loss_and_grads(spec, params, x, y, cfg, threads)
                if not _all_finite(loss, grads):
                    result.params, result.velocity = params, dict(opt.velocity)
                    raise TrainingAborted(f"non-finite loss at epoch {epoch}", result)
                params, opt = sgd_step(params, grads, opt, lr)
                total += loss * len(idx)
            with np.errstate(over="ignore", invalid="ignore"):
                metric, rate = evaluate(cfg, params, eval_ds, norm)
            row = MetricsRow(epoch, total / n, metric, lr, rate, time.perf_counter() - start)
            result.rows.append(row)
            result.params, result.velocity, result.epoch = params, dict(opt.velocity), epoch
            result.rng_state = train_rng.bit_generator.state
            if log:
                log(f"epoch {epoch:4d}  loss {row.train_loss:.5f}  eval {metric:.5f}  lr {lr:.4g}  rate {rate:.3f}")
            if writer:
                writer.row(row)
    except TrainingAborted:
        if writer:
            writer.finish(result, "aborted_nonfinite")
        raise
    if writer:
        writer.finish(result, "ok")
    return result


class _RunWriter:
    def __init__(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        self.out_dir = out_dir
        self.metrics = open(os.path.join(out_dir, "metrics.csv"), "w", newline="")
        self.timing = open(os.path.join(out_dir, "timing.csv"), "w", newline="")
        self.mw = csv.writer(self.metrics, lineterminator="\n")
        self.tw = csv.writer(self.timing, lineterminator="\n")
        self.mw.writerow(METRICS_HEADER)
        self.tw.writerow(["epoch", "wall_time_s"])

    def row(self, row: MetricsRow):
        self.mw.writerow(row.csv_fields())
        self.tw.writerow([row.epoch, f"{row.wall_time:.3f}"])
        self.metrics.flush()
        self.timing.flush()

    def finish(self, result: RunResult, status: str):
        self.metrics.close()
        self.timing.close()
        ckpt_io.save(os.path.join(self.out_dir, "checkpoint.bin"), result.checkpoint())
        with open(os.path.join(self.out_dir, "config.txt"), "w") as f:
            f.write(result.config.to_text())
        with open(os.path.join(self.out_dir, "summary.txt"), "w") as f:
            f.write(f"status = {status}\n")
            f.write(f"epochs_completed = {result.epoch}\n")
            f.write(f"initial_eval_metric = {result.initial_eval!r}\n")
            f.write(f"final_eval_metric = {result.final_eval!r}\n")


def load_run(path):
    """Restore ``(config, params, norm)`` from a checkpoint file."""
    ck = ckpt_io.load(path)
    cfg = from_text(ck.config_text)
    spec = cfg.network_spec()
    missing = [n for n in param_names(spec) if n not in ck.params]
    if missing:
        raise ValueError(f"checkpoint lacks parameters {missing}")
    return cfg, ck.params, (ck.extras["norm.mean"], ck.extras["norm.std"])


def compare_decoding(cfg: ExperimentConfig, arms=("cmd", "rate"), threads: int = 1, log=None):
    """Train one network per arm, identical except for the decoding head.

    Returns ``(results, csv_text)``; the CSV is long-format with one row per
    (arm, epoch), epoch 0 being the untrained network.
    """
    results = []
    for decoding in arms:
        arm_cfg = copy_config(cfg)
        arm_cfg.network.decoding = decoding
        results.append(train(arm_cfg, threads=threads, log=log))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["arm", "decoding", "time_steps", "epoch", "train_loss", "eval_metric"])
    for i, (decoding, res) in enumerate(zip(arms, results)):
        t = res.config.network.time_steps
        w.writerow([i, decoding, t, 0, repr(float("nan")), repr(res.initial_eval)])
        for row in res.rows:
            w.writerow([i, decoding, t, row.epoch, repr(row.train_loss), repr(row.eval_metric)])
    return results, buf.getvalue()


def energy_report(cfg: ExperimentConfig, params, norm, images, model: EnergyModel = EnergyModel()):
    """Record spike statistics over ``images`` and cost them per sample."""
    spec = cfg.network_spec()
    x = normalize(images, *norm)
    trace = []
    forward(spec, params, x, trace=trace)
    stats = SpikeStats.from_trace(spec, trace)
    activity = count_snn_ops_activity(spec, stats)
    n = stats.samples
    report = build_report(
        count_ann_ops(spec).scaled(n), count_snn_ops_static(spec).scaled(n), activity, model,
        spec.time_steps, notes={"samples": n, "spike_totals": "/".join(str(t) for t in stats.totals)},
    )
    return report, stats
