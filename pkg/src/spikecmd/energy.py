"""Operation counting and energy estimates for ANN vs SNN execution.

Two costing models are reported side by side:

* per-op: ``macs * e_mac + acs * e_ac`` (32-bit float costs).
* chip: ``flops / chip_flops_per_joule`` for a fixed-efficiency neuromorphic chip.

One MAC, one AC and one bias addition each count as one FLOP unit.
"""

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .network import NetworkSpec
from .numerics import col2im

FLOP_CONVENTION = "1 MAC = 1 AC = 1 FLOP"


@dataclass(frozen=True)
class EnergyModel:
    e_mac: float = 4.6e-12
    e_ac: float = 0.9e-12
    chip_flops_per_joule: float = 300e9
    timestep_duration: float = 1e-3

    def __post_init__(self):
        for name, v in asdict(self).items():
            if not v > 0:
                raise ValueError(f"{name} must be positive, got {v}")


@dataclass(frozen=True)
class OpCount:
    macs: int = 0
    acs: int = 0
    bias_acs: int = 0
    convention: str = FLOP_CONVENTION

    def __post_init__(self):
        if min(self.macs, self.acs, self.bias_acs) < 0:
            raise ValueError("operation counts must be non-negative")

    @property
    def flops(self):
        return self.macs + self.acs + self.bias_acs

    @property
    def total_acs(self):
        return self.acs + self.bias_acs

    def __add__(self, other):
        return OpCount(self.macs + other.macs, self.acs + other.acs, self.bias_acs + other.bias_acs)

    def scaled(self, k: int):
        return OpCount(self.macs * k, self.acs * k, self.bias_acs * k)


def layer_macs(net: NetworkSpec):
    """Structural multiply-accumulate count of every affine layer, per step."""
    out = []
    for layer, (in_shape, out_shape) in zip(net.layers, net.shapes()):
        out.append(layer.fan_in(in_shape) * int(np.prod(out_shape)))
    return out


def _has_bias(net: NetworkSpec, i: int):
    return i < len(net.layers) - 1 or net.head_bias


def _bias_adds(net: NetworkSpec):
    return sum(
        int(np.prod(out_shape))
        for i, (_, out_shape) in enumerate(net.shapes())
        if _has_bias(net, i)
    )


def count_ann_ops(net: NetworkSpec) -> OpCount:
    return OpCount(macs=sum(layer_macs(net)))


def count_snn_ops_static(net: NetworkSpec, time_steps=None, encoding_as_mac=True, count_bias=True) -> OpCount:
    """Input-independent SNN cost: every synapse active at every step.

    The encoding layer sees real-valued input, so by default its operations are
    genuine MACs; all later layers are accumulations.
    """
    t = net.time_steps if time_steps is None else time_steps
    if t < 1:
        raise ValueError("time_steps must be >= 1")
    per_layer = layer_macs(net)
    macs = per_layer[0] if encoding_as_mac else 0
    acs = sum(per_layer) - macs
    bias = _bias_adds(net) if count_bias else 0
    return OpCount(macs * t, acs * t, bias * t)


def fanout_map(net: NetworkSpec, layer_index: int):
    """Synapses leaving each input neuron of layer ``layer_index`` (shape = its input)."""
    layer = net.layers[layer_index]
    in_shape, out_shape = net.shapes()[layer_index]
    if layer.kind == "dense":
        return np.full(in_shape, layer.out, dtype=np.int64)
    c, h, w = in_shape
    k = layer.kernel
    ones = np.ones((1, k * k, out_shape[1] * out_shape[2]))
    cover = col2im(ones, (1, 1, h, w), k, k, layer.stride, layer.padding)[0, 0]
    cover = np.rint(cover).astype(np.int64) * layer.out
    return np.broadcast_to(cover, (c, h, w)).copy()


@dataclass
class SpikeStats:
    """Spike counts per IF layer, summed over time and samples."""

    time_steps: int
    samples: int
    counts: list  # per IF layer, array of the layer's output shape
    neurons: list = field(default_factory=list)

    @classmethod
    def from_trace(cls, net: NetworkSpec, trace):
        counts = [np.rint(t.sum(axis=(0, 1))).astype(np.int64) for t in trace]
        samples = trace[0].shape[1] if trace else 0
        return cls(net.time_steps, samples, counts, [int(c.size) for c in counts])

    @property
    def totals(self):
        return [int(c.sum()) for c in self.counts]

    def rates(self):
        return [tot / (n * self.time_steps * self.samples) for tot, n in zip(self.totals, self.neurons)]


def count_snn_ops_activity(net: NetworkSpec, stats: SpikeStats, encoding_as_mac=True, count_bias=True) -> OpCount:
    """Event-driven cost: one AC per (presynaptic spike, outgoing synapse) pair.

    Spike counts cover ``stats.samples`` samples; the encoding-layer and bias
    terms are scaled to match.
    """
    t, n = stats.time_steps, stats.samples
    acs = 0
    for i, count in enumerate(stats.counts):
        if i + 1 >= len(net.layers):
            break  # spikes of a rate head leave the network
        acs += int(np.sum(count * fanout_map(net, i + 1)))
    enc = layer_macs(net)[0] * t * n
    macs = enc if encoding_as_mac else 0
    if not encoding_as_mac:
        acs += enc
    bias = _bias_adds(net) * t * n if count_bias else 0
    return OpCount(macs, acs, bias)


def energy_per_op_model(ops: OpCount, model: EnergyModel = EnergyModel()) -> float:
    return ops.macs * model.e_mac + ops.total_acs * model.e_ac


def energy_chip_model(flops, model: EnergyModel = EnergyModel()) -> float:
    return flops / model.chip_flops_per_joule


def _ratio(num, den):
    if den == 0:
        return math.inf if num > 0 else math.nan
    return num / den


@dataclass
class EnergyReport:
    time_steps: int
    model: EnergyModel
    ann: OpCount
    snn_static: OpCount
    snn_activity: OpCount = None
    notes: dict = field(default_factory=dict)

    def energies(self):
        """``{(costing model, network): joules}``."""
        nets = {"ann": self.ann, "snn_static": self.snn_static}
        if self.snn_activity is not None:
            nets["snn_activity"] = self.snn_activity
        out = {}
        for name, ops in nets.items():
            out[("per_op", name)] = energy_per_op_model(ops, self.model)
            out[("chip", name)] = energy_chip_model(ops.flops, self.model)
        return out

    def ratio(self, costing: str, network: str):
        e = self.energies()
        return _ratio(e[(costing, "ann")], e[(costing, network)])

    def fields(self):
        """Flat, ordered key/value record."""
        rec = {
            "time_steps": self.time_steps,
            "flop_convention": FLOP_CONVENTION,
            "e_mac_j": self.model.e_mac,
            "e_ac_j": self.model.e_ac,
            "chip_flops_per_joule": self.model.chip_flops_per_joule,
            "timestep_duration_s": self.model.timestep_duration,
            "snn_latency_s": self.time_steps * self.model.timestep_duration,
        }
        nets = [("ann", self.ann), ("snn_static", self.snn_static), ("snn_activity", self.snn_activity)]
        for name, ops in nets:
            if ops is None:
                continue
            rec[f"{name}_macs"] = ops.macs
            rec[f"{name}_acs"] = ops.acs
            rec[f"{name}_bias_acs"] = ops.bias_acs
            rec[f"{name}_flops"] = ops.flops
        energies = self.energies()
        for costing in ("per_op", "chip"):
            for name, _ in nets:
                if (costing, name) in energies:
                    rec[f"{costing}_{name}_energy_j"] = energies[(costing, name)]
            for name, _ in nets[1:]:
                if (costing, name) in energies:
                    rec[f"{costing}_ratio_ann_over_{name}"] = self.ratio(costing, name)
        rec.update(self.notes)
        return rec

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self.fields().items())

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["costing", "network", "time_steps", "macs", "acs", "bias_acs", "flops", "energy_j", "ratio_ann_over_network"])
        nets = {"ann": self.ann, "snn_static": self.snn_static, "snn_activity": self.snn_activity}
        for (costing, name), e in self.energies().items():
            ops = nets[name]
            t = 1 if name == "ann" else self.time_steps
            writer.writerow([costing, name, t, ops.macs, ops.acs, ops.bias_acs, ops.flops, _fmt(e), _fmt(self.ratio(costing, name))])
        return buf.getvalue()


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


def build_report(ann: OpCount, snn_static: OpCount, snn_activity: OpCount = None, model: EnergyModel = EnergyModel(), time_steps: int = 1, notes=None) -> EnergyReport:
    return EnergyReport(time_steps, model, ann, snn_static, snn_activity, dict(notes or {}))


# Published single-image workload figures (GFLOPs) and reference outcomes.
PUBLISHED_ANN_GFLOPS = 66.19
PUBLISHED_SNN_GFLOPS = 0.425
PUBLISHED_SNN_ENERGY_J = 6.38e-6
PUBLISHED_MIN_RATIO = 158.0


def published_workload_report(time_steps: int, model: EnergyModel = EnergyModel(),
                              ann_gflops=PUBLISHED_ANN_GFLOPS, snn_gflops=PUBLISHED_SNN_GFLOPS) -> EnergyReport:
    """Feed published FLOP figures through the same calculators.

    ANN FLOPs are costed as MACs; SNN per-step FLOPs as ACs, times T.
    """
    ann = OpCount(macs=int(round(ann_gflops * 1e9)))
    snn = OpCount(acs=int(round(snn_gflops * 1e9)) * time_steps)
    notes = {
        "input_ann_gflops": ann_gflops,
        "input_snn_gflops_per_step": snn_gflops,
        "reference_snn_energy_j": PUBLISHED_SNN_ENERGY_J,
        "reference_min_ratio": PUBLISHED_MIN_RATIO,
        "note": "reference figures are not reproduced by either costing model from these inputs",
    }
    return build_report(ann, snn, None, model, time_steps, notes)
