"""The ten acceptance criteria at their stated tolerances.

Each test records a one-line verdict that is printed in the terminal
summary ("criterion N: PASS/FAIL ...").  Run alone with
``pytest tests/test_acceptance.py``.
"""
import itertools
import math
import statistics
import sys
import time
from contextlib import contextmanager
from dataclasses import replace

import numpy as np
import pytest
import torch

from speakerdist.bins import SYNTHETIC_BINS
from speakerdist.cli import main as cli_main
from speakerdist.evaluation import binned_report, evaluate_checkpoint, l1, parse_table_csv, rl1
from speakerdist.features import extract_features
from speakerdist.model import ModelConfig, count_parameters
from speakerdist.roomsim import (RoomSpec, SceneSpec, detect_direct_delay, enumerate_images,
                                 eyring_rt60, mid_rt60, sample_scene, synthesize_rir)
from speakerdist.scenegen import (AudioClip, DatasetManifest, SyntheticBuildConfig, ambient_noise,
                                  build_synthetic_dataset, measure_snr, mix_noise, speech_like)
from speakerdist.training import TrainConfig, load_feature_arrays, predict, train

from conftest import ACCEPTANCE, TINY_MODEL
from helpers import gradient_check, shape_grid_outputs

FS, C = 16000, 343.0


@contextmanager
def criterion(n, budget_s=None):
    """Record PASS/FAIL for criterion ``n``; the body fills ``detail``."""
    detail = []
    t0 = time.perf_counter()
    try:
        yield detail
    except BaseException as err:
        ACCEPTANCE[n] = (False, "; ".join(detail + [f"{type(err).__name__}: {err}".splitlines()[0]]))
        raise
    took = time.perf_counter() - t0
    ok = budget_s is None or took <= budget_s
    ACCEPTANCE[n] = (ok, "; ".join(detail + [f"{took:.0f}s" + (f" (budget {budget_s:.0f}s)" if budget_s else "")]))
    assert ok, f"criterion {n} exceeded its {budget_s}s runtime budget ({took:.0f}s)"


# uniform-absorption shoeboxes with moderate absorption, see the ledger on Eyring bias
EYRING_ROOMS = [((7.5, 9.0, 3.5), 0.3), ((5.0, 5.0, 5.0), 0.2), ((10.0, 8.0, 3.0), 0.25),
                ((4.0, 6.0, 2.7), 0.35), ((12.0, 10.0, 4.0), 0.15), ((6.0, 4.0, 3.0), 0.4),
                ((9.0, 4.0, 3.0), 0.3), ((14.0, 12.0, 4.5), 0.2), ((3.5, 4.0, 2.5), 0.25),
                ((8.0, 8.0, 3.2), 0.35)]


def test_criterion_1_acoustic_physics():
    with criterion(1, budget_s=120) as d:
        scene = SceneSpec(RoomSpec.uniform((7.5, 9.0, 3.5), 0.3), (2.0, 3.0, 1.5), (5.0, 6.0, 1.2))
        for n in range(5):
            brute = sum(1 for t in itertools.product(range(-n, n + 1), repeat=3) if max(map(abs, t)) <= n)
            assert len(enumerate_images(scene, n)) == brute == (2 * n + 1) ** 3
        d.append("image count (2n+1)^3 for n<=4")

        worst = 0.0
        for seed in range(100):
            sc = sample_scene(seed)
            rir = synthesize_rir(sc, length_s=sc.distance_m / C + 0.02)
            expected = sc.distance_m * FS / C
            worst = max(worst, abs(rir.direct_delay_samples - expected),
                        abs(detect_direct_delay(rir.taps) - expected))
        assert worst <= 1.0
        d.append(f"direct delay worst {worst:.2f} samples")

        room = RoomSpec.uniform((12.0, 10.0, 4.0), 1.0)
        src = (1.0, 5.0, 2.0)

        def area(dist):
            r = synthesize_rir(SceneSpec(room, src, (1.0 + dist, 5.0, 2.0)))
            k = int(r.direct_delay_samples)
            return r.taps[k - 40:k + 41].sum()

        ref = area(1.0)
        amp_err = max(abs(area(dd) * dd / ref - 1) for dd in (1.5, 2.0, 3.7, 5.0, 8.0, 10.5))
        assert amp_err < 0.01
        d.append(f"1/d amplitude worst {100 * amp_err:.2f}%")

        ratios = []
        for i, (dims, alpha) in enumerate(EYRING_ROOMS):
            room = RoomSpec.uniform(dims, alpha)
            src = (0.3 * dims[0], 0.35 * dims[1], 0.45 * dims[2])
            mic = (0.7 * dims[0], 0.6 * dims[1], 0.4 * dims[2])
            rir = synthesize_rir(SceneSpec(room, src, mic, seed=i))
            ratios.append(rir.rt60_s / eyring_rt60(room)[0])
        assert all(abs(r - 1) <= 0.25 for r in ratios), ratios
        d.append(f"RT60/Eyring in [{min(ratios):.2f}, {max(ratios):.2f}]")


def test_criterion_2_material_bracket():
    with criterion(2, budget_s=600) as d:
        rt = np.array([mid_rt60(sample_scene(seed).room) for seed in range(10_000)])
        med, p90 = np.median(rt), np.percentile(rt, 90)
        d.append(f"median {med:.2f}s, p10 {np.percentile(rt, 10):.2f}s, p90 {p90:.2f}s")
        assert 0.6 <= med <= 1.1 and p90 > 1.5


def test_criterion_3_snr_calibration():
    with criterion(3, budget_s=60) as d:
        rng = np.random.default_rng(3)
        snrs = [50, 40, 30, 20, 10, 5, 0] + list(rng.uniform(-10, 60, 93))
        worst = 0.0
        for i, snr in enumerate(snrs):
            clean = AudioClip(speech_like(1.0, seed=i))
            noise = AudioClip(ambient_noise(24000, seed=i) if i % 2 else rng.standard_normal(20000))
            mixed = mix_noise(clean, noise, snr, i)
            worst = max(worst, abs(measure_snr(clean.samples, mixed.samples) - snr))
        d.append(f"{len(snrs)} cases, worst error {worst:.2e} dB")
        assert worst < 0.01


def test_criterion_4_features():
    with criterion(4, budget_s=60) as d:
        rng = np.random.default_rng(4)
        x = rng.standard_normal(10 * FS)
        f = extract_features(x).data
        assert f.shape == (624, 257, 3)
        unit = np.max(np.abs(f[..., 1].astype(float) ** 2 + f[..., 2].astype(float) ** 2 - 1))
        assert unit < 1e-6
        a = extract_features(x[:8192], dtype=np.float64).data
        b = extract_features(np.concatenate([rng.standard_normal(256), x[:8192]]), dtype=np.float64).data
        shift = np.max(np.abs(b[1:] - a[:b.shape[0] - 1]))
        assert shift < 1e-5
        s = extract_features(7.5 * x[:8192], dtype=np.float64).data
        ok = a[..., 0] > 1e-8
        scale = np.max(np.abs(s[..., 1:][ok] - a[..., 1:][ok]))
        assert scale < 1e-6
        d.append(f"T x F = 624 x 257; |sin^2+cos^2-1| {unit:.1e}; hop shift {shift:.1e}; "
                 f"phase scale {scale:.1e}")


def test_criterion_5_shape_grid():
    with criterion(5, budget_s=120) as d:
        out = shape_grid_outputs(n_frames=8)
        assert all(ys == (2,) and yts == (2, 8) for _, ys, yts in out)
        n = count_parameters(ModelConfig())
        assert abs(n - 650_000) / 650_000 <= 0.05
        counts = {k: count_parameters(ModelConfig(kernel_shape=k)) for k in ("time", "square", "frequency")}
        assert counts["square"] > counts["frequency"] == counts["time"]
        d.append(f"{len(out)} valid cells; default {n} params; square {counts['square']} > "
                 f"frequency {counts['frequency']} = time {counts['time']}")


def test_criterion_6_gradient_check():
    with criterion(6, budget_s=120) as d:
        err = gradient_check(n_params=25)
        d.append(f"25 parameters, worst relative error {err.max():.1e}")
        assert err.size == 25 and err.max() < 1e-3


def _scene_clips(tmp_path, name, n, duration, seed):
    out = tmp_path / name
    build_synthetic_dataset(SyntheticBuildConfig(n_scenes=n, n_folds=0, split_ratios=(1.0, 0.0, 0.0),
                                                 clip_duration_s=duration, n_rays=5000, seed=seed), out)
    man = DatasetManifest.read(out / "manifest.jsonl")
    return man, load_feature_arrays(man, man.entries, "all")


def test_criterion_7_overfit_smoke(tmp_path):
    with criterion(7, budget_s=15 * 60) as d:
        man, (x, y) = _scene_clips(tmp_path, "toy", 16, 2.0, seed=7)
        cfg = ModelConfig().scaled(0.5)
        res = train(man, cfg, TrainConfig(epochs=200, seed=0), tmp_path / "run", data=((x, y), (x, y)))
        from speakerdist.model import load_checkpoint
        model, _ = load_checkpoint(res.checkpoint)
        y_hat, _ = predict(model, x)
        err = float(l1(y.numpy(), y_hat.numpy()).mean())
        d.append(f"16 clips, best epoch {res.best_epoch}, training L1 {err:.3f} m")
        assert err < 0.2


@pytest.mark.slow
def test_criterion_8_desk_scale_generalization(tmp_path):
    with criterion(8, budget_s=60 * 60) as d:
        out = tmp_path / "desk"
        build_synthetic_dataset(SyntheticBuildConfig(n_scenes=300, n_folds=0, split_ratios=(0.8, 0.1, 0.1),
                                                     clip_duration_s=3.0, n_rays=5000, seed=8), out)
        man = DatasetManifest.read(out / "manifest.jsonl")
        assert [len(man.subset(s)) for s in ("train", "val", "test")] == [240, 30, 30]
        cache = tmp_path / "cache"
        res = train(man, ModelConfig().scaled(0.5),
                    TrainConfig(epochs=100, batch_size=8, learning_rate=1e-3, seed=0, feature_cache=str(cache)),
                    tmp_path / "run")
        rep, records = evaluate_checkpoint(res.checkpoint, man, cache_dir=cache)
        mean_train = statistics.fmean(e.distance_m for e in man.subset("train"))
        baseline = statistics.fmean(abs(r["y"] - mean_train) for r in records)
        ratio = rep.average.l1 / baseline
        d.append(f"test L1 {rep.average.l1:.3f} m vs mean predictor {baseline:.3f} m "
                 f"(ratio {ratio:.3f}, best epoch {res.best_epoch})")
        assert ratio <= 0.6


def test_criterion_9_metric_oracles():
    with criterion(9, budget_s=60) as d:
        rng = np.random.default_rng(9)
        y = rng.uniform(0.5, 15, 500)
        y_hat = y + rng.normal(0, 1.5, 500)
        pairs = [(a, b, {}) for a, b in zip(y, y_hat)]
        rep = binned_report(pairs, SYNTHETIC_BINS)
        for i, (lo, hi) in enumerate(SYNTHETIC_BINS.edges):
            sel = [(a, b) for a, b in zip(y, y_hat) if lo <= a < hi]
            e = [abs(a - b) for a, b in sel]
            r = [abs(a - b) / a for a, b in sel]
            row = rep.bin_rows[i]
            assert row.count == len(sel)
            assert math.isclose(row.l1, statistics.fmean(e), rel_tol=1e-12)
            assert math.isclose(row.rl1, statistics.fmean(r), rel_tol=1e-12)
            assert math.isclose(row.l1_ci, 1.96 * statistics.stdev(e) / math.sqrt(len(e)), rel_tol=1e-12)
        assert float(l1(5.0, 4.25)) == 0.75 and math.isclose(float(rl1(5.0, 4.25)), 0.15)
        inside = [r for r in rep.bin_rows if r.label != "other"]
        n_in = sum(r.count for r in inside)
        pooled = binned_report([p for p in pairs if 1 <= p[0] < 14]).average
        agg = abs(sum(r.l1 * r.count for r in inside) / n_in - pooled.l1)
        assert agg < 1e-9

        n, sigma = 50, 1.0
        analytic = 1.96 * sigma * math.sqrt(1 - 2 / math.pi) / math.sqrt(n)  # sd of |N(0, 1)|
        widths = [binned_report([(a, a + e, {}) for a, e in
                                 zip(rng.uniform(1, 14, n), rng.normal(0, sigma, n))]).average.l1_ci
                  for _ in range(2000)]
        rel = abs(np.mean(widths) - analytic) / analytic
        d.append(f"brute-force match, aggregation gap {agg:.1e}, CI width off analytic by {100 * rel:.1f}%")
        assert rel < 0.10


def test_criterion_10_harness_fidelity(tmp_path, tiny_dataset):
    with criterion(10) as d:
        base = {"manifest": str(tiny_dataset), "model": dict(TINY_MODEL),
                "train": {"epochs": 1, "batch_size": 4}}
        import yaml

        def run(cmd, doc, name):
            p = tmp_path / f"{name}.yaml"
            p.write_text(yaml.safe_dump(dict(doc, out=str(tmp_path / name)), sort_keys=False))
            assert cli_main([cmd, "--config", str(p)]) == 0
            return tmp_path / name

        t1 = parse_table_csv((run("ablate", dict(base, ablate={"grid": "architecture"}), "t1")
                              / "ablation.csv").read_text())
        assert [(r["num_recurrent_layers"], r["kernel_shape"]) for r in t1] == [
            (n, k) for n in (0, 1, 2) for k in ("time", "square", "frequency")]
        assert all(r["status"] == "ok" and "l1 [8,14)" in r for r in t1)
        t6 = parse_table_csv((run("ablate", dict(base, ablate={"grid": "attention"}), "t6")
                              / "ablation.csv").read_text())
        assert [r["attention_mode"] for r in t6] == ["none", "spectrogram_only", "all_channels"]

        ckpt = tmp_path / "t1" / "cfg08" / "best.pt"
        corpora = {c: {"checkpoint": str(ckpt), "manifest": str(tiny_dataset)} for c in ("syn", "hyb", "real")}
        mat = parse_table_csv((run("crosscorpus", {"crosscorpus": {"corpora": corpora}}, "cc")
                               / "matrix.csv").read_text())
        assert [r["train"] for r in mat] == ["syn", "hyb", "real"] and all(len(r) == 4 for r in mat)
        in_corpus = evaluate_checkpoint(ckpt, tiny_dataset)[0].average.l1
        assert all(mat[i][c] == in_corpus for i, c in enumerate(("syn", "hyb", "real")))
        d.append(f"architecture grid {len(t1)} rows, attention grid {len(t6)} rows, cross-corpus "
                 f"{len(mat)}x{len(mat[0]) - 1}, diagonal equals in-corpus L1")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
