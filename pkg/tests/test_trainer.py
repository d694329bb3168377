import json

import numpy as np
import pytest

from dualcvae.checkpoint import Checkpoint
from dualcvae.data import ConfigError, DatasetSplit
from dualcvae.synthetic import overfit_windows
from dualcvae.trainer import AdamState, TrainConfig, Trainer, adam_step, clip_grad_norm, lr_schedule, train

from conftest import tiny_config


def small_split(count=4, validation=0):
    wins = overfit_windows(seed=3, count=count + validation)
    return DatasetSplit(wins[:count], wins[count:], [], "ZARA1")


def test_defaults_follow_training_setup():
    cfg = TrainConfig()
    assert (cfg.batch_size, cfg.epochs, cfg.lr_initial, cfg.lr_after, cfg.lr_switch_epoch) == (128, 60, 1e-3, 1e-4, 30)
    assert (cfg.weight_decay, cfg.dropout_rate, cfg.temperature, cfg.lambda_z, cfg.lambda_c) == (0.1, 0.2, 0.1, 0.005, 0.005)
    assert cfg.num_patterns == 4 and cfg.eval_k == 20


@pytest.mark.parametrize("kwargs", [{"lr_switch_epoch": 61}, {"lr_initial": 0.0}, {"temperature": -1.0},
                                    {"dropout_rate": 1.0}, {"batch_size": 0}, {"lambda_z": -1.0}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_lr_schedule_examples():
    cfg = TrainConfig()
    assert lr_schedule(29, cfg) == 0.001
    assert lr_schedule(30, cfg) == 0.0001
    assert lr_schedule(0, TrainConfig(lr_switch_epoch=0)) == 0.0001


def test_adam_zero_gradient_no_decay_is_identity():
    w = {"w": np.array([1.0, -2.0])}
    adam_step(w, {"w": np.zeros(2)}, AdamState(), 0.001)
    np.testing.assert_array_equal(w["w"], [1.0, -2.0])


def test_adam_first_step_on_square():
    w = {"w": np.array([1.0])}
    adam_step(w, {"w": 2 * w["w"].copy()}, AdamState(), 0.001)
    # m_hat = 2, v_hat = 4 after bias correction
    assert w["w"][0] == pytest.approx(1.0 - 0.001 * 2.0 / (2.0 + 1e-8), abs=1e-15)


def test_adam_two_steps_decrease_monotonically():
    w, state = {"w": np.array([1.0])}, AdamState()
    seen = [1.0]
    for _ in range(2):
        adam_step(w, {"w": np.array([2.0])}, state, 0.001)
        seen.append(w["w"][0])
    assert seen[0] > seen[1] > seen[2]


def test_adam_decoupled_weight_decay():
    w = {"w": np.array([2.0])}
    adam_step(w, {"w": np.zeros(1)}, AdamState(), 0.01, weight_decay=0.1)
    assert w["w"][0] == pytest.approx(2.0 - 0.01 * 0.1 * 2.0, abs=1e-15)


def test_clip_grad_norm():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_grad_norm(g, 10.0) == 5.0 and g["a"][0] == 3.0
    assert clip_grad_norm(g, 1.0) == 5.0
    assert np.hypot(g["a"][0], g["b"][0]) == pytest.approx(1.0, abs=1e-9)


def test_empty_training_set_is_a_config_error():
    with pytest.raises(ConfigError):
        train(DatasetSplit([], [], [], "ETH"), TrainConfig(epochs=1, lr_switch_epoch=1))


def _cfg(**kw):
    base = dict(epochs=3, lr_switch_epoch=2, batch_size=2, seed=5)
    base.update(kw)
    return TrainConfig(**base)


def test_identical_seed_gives_identical_epoch_one_loss():
    split = small_split()
    a = Trainer(_cfg(), tiny_config(0.2)).run_epoch(split.train)
    b = Trainer(_cfg(), tiny_config(0.2)).run_epoch(split.train)
    assert a == b
    c = Trainer(_cfg(seed=6), tiny_config(0.2)).run_epoch(split.train)
    assert c["total"] != a["total"]


def test_no_dead_parameters_after_first_epoch():
    trainer = Trainer(_cfg())
    trainer.run_epoch(small_split(count=4).train)
    assert trainer.dead_parameters == []


def test_checkpoint_round_trip_is_byte_identical(tmp_path):
    trainer = Trainer(_cfg(), tiny_config())
    trainer.run_epoch(small_split().train)
    raw = trainer.checkpoint().to_bytes()
    again = Checkpoint.from_bytes(raw).to_bytes()
    assert raw == again
    trainer.checkpoint().save(tmp_path / "a.ckpt")
    Checkpoint.load(tmp_path / "a.ckpt").save(tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_checkpoint_rejects_foreign_bytes():
    with pytest.raises(ValueError, match="magic"):
        Checkpoint.from_bytes(b"not a checkpoint at all")


def test_resume_reproduces_next_step_bitwise():
    split = small_split()
    original = Trainer(_cfg(), tiny_config(0.2))
    original.run_epoch(split.train)
    resumed = Trainer.from_checkpoint(Checkpoint.from_bytes(original.checkpoint().to_bytes()))
    assert original.run_epoch(split.train) == resumed.run_epoch(split.train)
    for (n, a), (_, b) in zip(original.model.named_parameters(), resumed.model.named_parameters()):
        assert np.array_equal(a.data, b.data), n


def test_train_writes_metrics_and_checkpoints(tmp_path):
    split = small_split(count=3, validation=2)
    trainer, history = train(split, _cfg(), tmp_path, model_cfg=tiny_config())
    lines = [json.loads(l) for l in (tmp_path / "metrics.jsonl").read_text().splitlines()]
    assert [r["epoch"] for r in lines] == [0, 1, 2]
    assert [r["lr"] for r in lines] == [1e-3, 1e-3, 1e-4]
    assert all(r["val_min_ade"] is not None for r in lines)
    for name in ("epoch_000.ckpt", "epoch_002.ckpt", "last.ckpt", "best.ckpt"):
        assert (tmp_path / name).exists()
    assert trainer.epoch == 3 and len(history) == 3


def test_train_resumes_from_checkpoint(tmp_path):
    split = small_split()
    full, _ = train(split, _cfg(), model_cfg=tiny_config(0.2))
    first, _ = train(split, _cfg(epochs=2, lr_switch_epoch=2), model_cfg=tiny_config(0.2))
    resumed = Trainer.from_checkpoint(Checkpoint.from_bytes(first.checkpoint().to_bytes()))
    resumed.cfg = _cfg()
    train(split, _cfg(), trainer=resumed)
    for (n, a), (_, b) in zip(full.model.named_parameters(), resumed.model.named_parameters()):
        assert np.array_equal(a.data, b.data), n


@pytest.mark.slow
def test_overfit_reconstruction_drops_hundredfold():
    """8 scripted windows, 500 epochs, training-setup defaults with the rate held at 1e-3."""
    cfg = TrainConfig(epochs=500, lr_after=1e-3, lr_switch_epoch=500)
    _, history = train(DatasetSplit(overfit_windows(), [], [], "ZARA1"), cfg)
    first, last = history[0]["reconstruction"], history[-1]["reconstruction"]
    print(f"reconstruction {first:.4f} -> {last:.4f} ({first / last:.1f}x)")
    assert first / last >= 100
