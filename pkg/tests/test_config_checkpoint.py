import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spikecmd import checkpoint as ckpt_io
from spikecmd.config import ConfigError, ExperimentConfig, from_text
from spikecmd.experiment import train
from spikecmd.network import forward


def test_defaults_parse_and_validate():
    for task in ("regression", "detection"):
        cfg = ExperimentConfig.for_task(task).validate()
        spec = cfg.network_spec()
        assert spec.input_shape == cfg.input_shape()


@settings(max_examples=40, deadline=None)
@given(
    task=st.sampled_from(["regression", "detection"]),
    t=st.integers(1, 12),
    lr=st.floats(1e-4, 1.0, allow_nan=False),
    seed=st.integers(0, 2**31 - 1),
    decoding=st.sampled_from(["cmd", "rate"]),
    detach=st.booleans(),
)
def test_config_round_trip(task, t, lr, seed, decoding, detach):
    cfg = ExperimentConfig.for_task(task)
    cfg.network.time_steps = t
    cfg.optim.base_lr = lr
    cfg.experiment.seed = seed
    cfg.network.decoding = decoding
    cfg.network.detach_reset = detach
    text = cfg.to_text()
    again = from_text(text)
    assert again == cfg
    assert again.to_text() == text


def test_partial_file_keeps_task_preset():
    cfg = from_text("# comment\nexperiment.task = detection\noptim.epochs = 3\n")
    assert cfg.experiment.task == "detection"
    assert cfg.optim.epochs == 3
    assert cfg.data.grid == ExperimentConfig.for_task("detection").data.grid


@pytest.mark.parametrize("text", [
    "nonsense",
    "optim.nope = 1",
    "optim.epochs = three",
    "network.decoding = spikes",
    "network.time_steps = 0",
    "network.layers = dense:4,pool:2",
    "network.detach_reset = maybe",
])
def test_bad_config_rejected(text):
    with pytest.raises(ConfigError):
        from_text(text).validate()


def small_cfg(epochs=2, seed=3):
    cfg = ExperimentConfig.for_task("regression")
    cfg.optim.epochs = epochs
    cfg.experiment.seed = seed
    cfg.data.n_train = 32
    cfg.data.n_eval = 16
    cfg.network.layers = "dense:16"
    return cfg


def test_checkpoint_round_trip_is_byte_identical(tmp_path):
    res = train(small_cfg())
    ck = res.checkpoint()
    raw = ckpt_io.to_bytes(ck)
    path = tmp_path / "c.bin"
    ckpt_io.save(path, ck)
    back = ckpt_io.load(path)
    assert ckpt_io.to_bytes(back) == raw
    assert back.epoch == 2 and back.config_text == ck.config_text
    assert back.rng_state == ck.rng_state
    spec = from_text(back.config_text).network_spec()
    x = np.random.default_rng(0).random((4,) + spec.input_shape)
    np.testing.assert_array_equal(forward(spec, back.params, x), forward(spec, res.params, x))


def test_checkpoint_rejects_corruption():
    raw = ckpt_io.to_bytes(train(small_cfg(epochs=0)).checkpoint())
    with pytest.raises(ValueError):
        ckpt_io.from_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(ValueError):
        ckpt_io.from_bytes(raw[:-3])
    with pytest.raises(ValueError):
        ckpt_io.from_bytes(raw + b"\0")
