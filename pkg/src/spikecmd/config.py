"""Flat ``section.key = value`` experiment configuration."""

from dataclasses import dataclass, field, fields, replace

from .autodiff import SurrogateConfig
from .network import LayerSpec, NetworkSpec
from .neuron import IFConfig
from .training import OptimizerState


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentSection:
    task: str = "regression"
    seed: int = 7
    out_dir: str = "runs/default"


@dataclass
class NetworkSection:
    layers: str = "dense:64,dense:64"
    time_steps: int = 6
    decoding: str = "cmd"
    v_threshold: float = 1.0
    v_init: float = 0.0
    alpha: float = 2.0
    detach_reset: bool = False
    head_bias: bool = True
    init_gain: float = 1.0


@dataclass
class OptimSection:
    base_lr: float = 0.1
    min_lr: float = 0.0
    momentum: float = 0.9
    weight_decay: float = 5e-3
    batch_size: int = 32
    epochs: int = 100


@dataclass
class DataSection:
    n_train: int = 512
    n_eval: int = 128
    image_size: int = 12
    channels: int = 1
    min_size: int = 3
    max_size: int = 8
    noise: float = 0.2
    grid: int = 3
    num_classes: int = 2
    max_objects: int = 3
    augment: bool = True
    flip_prob: float = 0.5


@dataclass
class LossSection:
    coord: float = 5.0
    obj: float = 1.0
    noobj: float = 0.5
    cls: float = 1.0


SECTIONS = ("experiment", "network", "optim", "data", "loss")


@dataclass
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    network: NetworkSection = field(default_factory=NetworkSection)
    optim: OptimSection = field(default_factory=OptimSection)
    data: DataSection = field(default_factory=DataSection)
    loss: LossSection = field(default_factory=LossSection)

    def validate(self):
        if self.experiment.task not in ("regression", "detection"):
            raise ConfigError(f"experiment.task must be regression or detection, got {self.experiment.task!r}")
        for key, v in [
            ("optim.epochs", self.optim.epochs), ("optim.batch_size", self.optim.batch_size - 1),
            ("data.n_train", self.data.n_train - 1), ("data.n_eval", self.data.n_eval - 1),
        ]:
            if v < 0:
                raise ConfigError(f"{key} out of range")
        try:
            self.network_spec()
            OptimizerState(self.optim.momentum, self.optim.base_lr, self.optim.weight_decay)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        return self

    def input_shape(self):
        d = self.data
        channels = 1 if self.experiment.task == "regression" else d.channels
        return (channels, d.image_size, d.image_size)

    def network_spec(self) -> NetworkSpec:
        n = self.network
        if_cfg = IFConfig(n.v_threshold, n.v_init)
        layers = [_parse_layer(tok, if_cfg) for tok in n.layers.split(",") if tok.strip()]
        if not layers:
            raise ConfigError("network.layers must list at least the encoding layer")
        rate = n.decoding == "rate"
        if self.experiment.task == "regression":
            head = LayerSpec("dense", 4, has_if_neurons=rate, if_config=if_cfg)
        else:
            head = LayerSpec("conv2d", 5 + self.data.num_classes, has_if_neurons=rate, if_config=if_cfg)
        spec = NetworkSpec(
            self.input_shape(), tuple(layers) + (head,), n.time_steps, n.decoding,
            SurrogateConfig(n.alpha, n.detach_reset), n.head_bias,
        )
        if self.experiment.task == "detection":
            g = self.data.grid
            if spec.output_shape[1:] != (g, g):
                raise ConfigError(f"network output grid {spec.output_shape[1:]} does not match data.grid={g}")
        return spec

    @classmethod
    def for_task(cls, task: str) -> "ExperimentConfig":
        cfg = cls()
        if task == "detection":
            cfg.experiment.task = "detection"
            cfg.experiment.out_dir = "runs/detection"
            cfg.network.layers = "conv:8:3:1:1,conv:16:2:2:0,conv:32:2:2:0,conv:32:2:2:0,conv:32:3:1:1"
            cfg.optim.base_lr = 0.03
            cfg.optim.epochs = 80
            cfg.data = DataSection(image_size=24, channels=3, min_size=6, max_size=12, n_train=512, n_eval=128)
        elif task != "regression":
            raise ConfigError(f"unknown task {task!r}")
        return cfg

    def items(self):
        for section in SECTIONS:
            obj = getattr(self, section)
            for f in fields(obj):
                yield f"{section}.{f.name}", getattr(obj, f.name)

    def to_text(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in self.items())

    def set(self, key: str, raw: str):
        section, _, name = key.partition(".")
        if section not in SECTIONS or not name:
            raise ConfigError(f"unknown config key {key!r}")
        obj = getattr(self, section)
        known = {f.name: f for f in fields(obj)}
        if name not in known:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(obj, name, _coerce(key, raw, type(getattr(type(obj)(), name))))

    def with_overrides(self, **pairs):
        """Copy with ``section__key=value`` overrides (values already typed)."""
        cfg = from_text(self.to_text())
        for k, v in pairs.items():
            cfg.set(k.replace("__", "."), _format(v))
        return cfg


def _parse_layer(token: str, if_cfg: IFConfig) -> LayerSpec:
    parts = token.strip().split(":")
    try:
        if parts[0] == "dense" and len(parts) == 2:
            return LayerSpec("dense", int(parts[1]), if_config=if_cfg)
        if parts[0] == "conv" and len(parts) == 5:
            out, k, s, p = (int(v) for v in parts[1:])
            return LayerSpec("conv2d", out, k, s, p, if_config=if_cfg)
    except ValueError as e:
        raise ConfigError(f"bad layer {token!r}: {e}") from e
    raise ConfigError(f"bad layer {token!r}; expected dense:OUT or conv:OUT:K:STRIDE:PAD")


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(key, raw: str, typ):
    raw = raw.strip()
    try:
        if typ is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError as e:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from e


def from_text(text: str, base: ExperimentConfig = None) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Missing keys keep defaults."""
    cfg = base if base is not None else ExperimentConfig()
    task_line = None
    entries = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key == "experiment.task":
            task_line = raw
        entries.append((key, raw))
    if base is None and task_line is not None:
        cfg = ExperimentConfig.for_task(task_line)
    for key, raw in entries:
        cfg.set(key, raw)
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path) as f:
        return from_text(f.read())


def copy_config(cfg: ExperimentConfig) -> ExperimentConfig:
    return from_text(cfg.to_text())


__all__ = ["ConfigError", "ExperimentConfig", "from_text", "load_config", "copy_config", "replace"]
