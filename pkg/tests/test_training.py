import csv
import json
import math
from dataclasses import replace

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from speakerdist.model import DistanceCRNN, ModelConfig, load_checkpoint
from speakerdist.scenegen import DatasetManifest
from speakerdist.training import (LOG_FIELDS, DivergenceError, PlateauSchedule, TrainConfig, dual_loss,
                                  load_feature_arrays, read_log, train, train_snr_family)

from conftest import TINY_MODEL


def test_loss_examples():
    t = lambda *v: torch.tensor(v, dtype=torch.float64)
    assert dual_loss(t(2.0), t([2.0, 2.0]), t(2.0)).item() == 0
    assert dual_loss(t(3.0), t([2.0, 3.0]), t(2.0)).item() == 2.0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 12), st.integers(0, 2**31))
def test_loss_matches_scalar_loop(b, t, seed):
    g = torch.Generator().manual_seed(seed)
    y = torch.rand(b, generator=g, dtype=torch.float64) * 13 + 1
    y_hat = torch.randn(b, generator=g, dtype=torch.float64) * 5
    yt_hat = torch.randn(b, t, generator=g, dtype=torch.float64) * 5
    total = 0.0
    for i in range(b):
        s = (y[i].item() - y_hat[i].item()) ** 2
        for j in range(t):
            s += (y[i].item() - yt_hat[i, j].item()) ** 2
        total += s
    got = dual_loss(y_hat, yt_hat, y).item()
    assert got >= 0 and abs(got - total / b) < 1e-9 * max(1.0, total)


def test_loss_rejects_nan():
    with pytest.raises(DivergenceError):
        dual_loss(torch.tensor([math.nan]), torch.zeros(1, 3), torch.ones(1))


def test_plateau_schedule():
    s = PlateauSchedule(1e-3, 0.8, 5)
    s.step(1.0)
    lrs = [s.step(1.0) for _ in range(5)]
    assert lrs[:4] == [1e-3] * 4 and lrs[4] == pytest.approx(8e-4)
    # counter restarts after a reduction and after an improvement
    assert [s.step(1.0) for _ in range(4)] == [pytest.approx(8e-4)] * 4
    assert s.step(0.5) == pytest.approx(8e-4)
    assert s.step(0.6) == pytest.approx(8e-4)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=60))
def test_lr_sequence_non_increasing_with_exact_factor(metrics):
    s = PlateauSchedule(1e-3, 0.8, 5)
    prev = s.lr
    for m in metrics:
        lr = s.step(m)
        assert lr == prev or lr == prev * 0.8
        prev = lr


def test_config_validation():
    for bad in (dict(lr_decay_factor=1.0), dict(learning_rate=0), dict(batch_size=0)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_single_step_decreases_loss():
    cfg = ModelConfig(n_frames=6, **TINY_MODEL)
    for case in range(20):
        model = DistanceCRNN(cfg, seed=case).double().eval()
        g = torch.Generator().manual_seed(case)
        x = torch.rand(1, 6, 257, 3, generator=g, dtype=torch.float64)
        y = torch.rand(1, generator=g, dtype=torch.float64) * 13 + 1
        opt = torch.optim.SGD(model.parameters(), lr=1e-5)

        def loss():
            y_hat, yt_hat, _ = model(x)
            return dual_loss(y_hat, yt_hat, y)

        before = loss()
        opt.zero_grad()
        before.backward()
        opt.step()
        assert loss().item() < before.item()


def test_train_writes_log_and_checkpoint(tiny_dataset, tiny_model_config, tmp_path):
    res = train(tiny_dataset, tiny_model_config, TrainConfig(epochs=3, batch_size=4), tmp_path)
    rows = read_log(res.log_path)
    assert list(rows[0]) == list(LOG_FIELDS)
    assert [int(r["epoch"]) for r in rows] == [0, 1, 2, 3]
    best = min(float(r["val_mse"]) for r in rows)
    assert res.best_val_mse == best
    model, blob = load_checkpoint(res.checkpoint)
    assert blob["training_state"]["val_mse"] == best
    assert blob["training_state"]["optimizer"] == "adam"
    assert model.cfg.n_frames == 61  # 1 s clips


def test_training_is_deterministic(tiny_dataset, tiny_model_config, tmp_path):
    cfg = TrainConfig(epochs=2, batch_size=4, seed=9)
    a = train(tiny_dataset, tiny_model_config, cfg, tmp_path / "a").history
    b = train(tiny_dataset, tiny_model_config, cfg, tmp_path / "b").history
    assert abs(a[-1]["train_loss"] - b[-1]["train_loss"]) < 1e-6


def test_finetune_restores_state(tiny_checkpoint, tiny_dataset, tiny_model_config, tmp_path):
    _, blob = load_checkpoint(tiny_checkpoint)
    res = train(tiny_dataset, tiny_model_config,
                TrainConfig(epochs=1, batch_size=4, finetune_from=str(tiny_checkpoint)), tmp_path)
    assert abs(res.history[0]["val_mse"] - blob["training_state"]["val_mse"]) < 1e-6
    _, new = load_checkpoint(res.checkpoint)
    assert new["training_state"]["finetuned_from"] == str(tiny_checkpoint)


def test_empty_split_rejected(tiny_dataset):
    man = DatasetManifest.read(tiny_dataset)
    with pytest.raises(ValueError, match="empty"):
        load_feature_arrays(man, [], "all")


def test_divergence_aborts_with_last_checkpoint(tiny_dataset, tiny_model_config, tmp_path):
    with pytest.raises(DivergenceError) as info:
        train(tiny_dataset, tiny_model_config, TrainConfig(epochs=3, batch_size=4, learning_rate=1e30),
              tmp_path)
    assert info.value.checkpoint is not None and info.value.checkpoint.exists()


def test_snr_family(tiny_dataset, tiny_model_config, tmp_path):
    assert train_snr_family({}, [], tiny_model_config, TrainConfig(epochs=0), tmp_path / "empty") == {
        "models": {}, "skipped": [], "model_config": tiny_model_config.to_dict()}
    snrs = [50, 40, 30, 20, 10, 5, 0]
    cfg = TrainConfig(epochs=0, batch_size=4)
    fam = train_snr_family({s: tiny_dataset for s in snrs if s != 5}, snrs, tiny_model_config, cfg,
                           tmp_path / "fam")
    assert sorted(fam["models"], key=float) == ["0", "10", "20", "30", "40", "50"]
    assert fam["skipped"] == [5]
    assert json.loads((tmp_path / "fam" / "family.json").read_text())["skipped"] == [5]
    full = train_snr_family({s: tiny_dataset for s in snrs}, snrs, tiny_model_config, cfg, tmp_path / "all")
    assert len(full["models"]) == 7
