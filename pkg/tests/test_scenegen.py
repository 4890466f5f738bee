import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from speakerdist.roomsim import Rir
from speakerdist.scenegen import (AudioClip, DatasetEntry, DatasetManifest, HybridBuildConfig,
                                  RealIngestConfig, SyntheticBuildConfig, build_hybrid_dataset,
                                  build_synthetic_dataset, convolve_scene, dataset_stats,
                                  fold_groups, ingest_real_recordings, load_clip, measure_snr,
                                  mix_noise, noise_gain, ratio_counts, resample, save_clip,
                                  single_source_windows, speech_like)
from speakerdist.scenegen.audio import fit_length

FS = 16000


def _direct_conv(x, h):
    out = np.zeros(x.size + h.size - 1)
    for k, hk in enumerate(h):
        out[k:k + x.size] += hk * x
    return out


# ---- convolution ------------------------------------------------------------

def test_convolve_identity_and_shift(rng):
    dry = AudioClip(rng.standard_normal(4000))
    assert np.array_equal(convolve_scene(dry, Rir(np.array([1.0]))).samples.round(12),
                          dry.samples.round(12))
    h = np.zeros(50)
    h[17] = 0.4
    wet = convolve_scene(dry, Rir(h), duration_s=4000 / FS).samples
    np.testing.assert_allclose(wet[17:], 0.4 * dry.samples[:-17], atol=1e-12)
    np.testing.assert_allclose(wet[:17], 0.0, atol=1e-12)


def test_convolve_matches_direct_sum(rng):
    dry = AudioClip(rng.standard_normal(FS))
    h = rng.standard_normal(FS // 2) * np.exp(-np.arange(FS // 2) / 1000)
    wet = convolve_scene(dry, Rir(h)).samples
    ref = _direct_conv(dry.samples, h)
    assert np.max(np.abs(wet - ref)) < 1e-6 * np.max(np.abs(ref))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4096), st.integers(1, 512), st.integers(0, 2 ** 31))
def test_convolution_property(n, m, seed):
    r = np.random.default_rng(seed)
    x, h = r.standard_normal(n), r.standard_normal(m)
    wet = convolve_scene(AudioClip(x), Rir(h)).samples
    ref = _direct_conv(x, h)
    assert np.linalg.norm(wet - ref) <= 1e-6 * np.linalg.norm(ref)


def test_convolve_trims_and_pads(rng):
    dry = AudioClip(rng.standard_normal(1000))
    h = rng.standard_normal(300)
    assert len(convolve_scene(dry, Rir(h), duration_s=0.05)) == 800
    out = convolve_scene(dry, Rir(h), duration_s=0.1)
    assert len(out) == 1600 and np.all(out.samples[1299:] == 0)


def test_convolve_rejects_silence_and_rate_mismatch():
    with pytest.raises(ValueError):
        convolve_scene(AudioClip(np.zeros(100)), Rir(np.ones(3)))
    with pytest.raises(ValueError):
        convolve_scene(AudioClip(np.ones(100)), Rir(np.ones(3), 8000))


def test_audio_clip_validation_and_resampling(tmp_path):
    with pytest.raises(ValueError):
        AudioClip(np.zeros((2, 10)))
    with pytest.raises(ValueError):
        AudioClip(np.array([0.0, np.nan]))
    with pytest.raises(ValueError):
        AudioClip(np.zeros(10), 8000)
    t = np.arange(44100) / 44100
    clip = AudioClip.from_array(np.sin(2 * np.pi * 440 * t), 44100)
    assert len(clip) == FS
    spec = np.abs(np.fft.rfft(clip.samples))
    assert abs(np.argmax(spec) - 440) <= 1
    save_clip(tmp_path / "a.wav", clip)
    back = load_clip(tmp_path / "a.wav")
    np.testing.assert_allclose(back.samples, clip.samples.astype(np.float32))
    assert resample(np.ones(5), FS) is not None


# ---- noise mixing -------------------------------------------------------------

def test_noise_gain_cases():
    assert noise_gain(1.0, 1.0, 0.0) == pytest.approx(1.0)
    assert noise_gain(1.0, 0.25, 10.0) == pytest.approx(math.sqrt(1 / 2.5))
    assert noise_gain(1.0, 0.25, 10.0) == pytest.approx(0.6325, abs=1e-4)
    with pytest.raises(ValueError):
        noise_gain(0.0, 1.0, 10.0)


def test_mix_noise_infinite_snr_is_identity(rng):
    clean = AudioClip(rng.standard_normal(1000))
    assert mix_noise(clean, AudioClip(rng.standard_normal(2000)), math.inf, 0) is clean


def test_mix_noise_known_powers(rng):
    clean = AudioClip(np.sign(rng.standard_normal(8000)))          # power exactly 1
    noise = AudioClip(0.5 * np.sign(rng.standard_normal(8000)))    # power exactly 0.25
    mixed = mix_noise(clean, noise, 10.0, 1)
    resid = mixed.samples - clean.samples
    np.testing.assert_allclose(resid, noise.samples * math.sqrt(1 / 2.5))
    assert measure_snr(clean.samples, mixed.samples) == pytest.approx(10.0, abs=0.01)


@pytest.mark.parametrize("snr", [50, 40, 30, 20, 10, 5, 0])
def test_mix_noise_hits_listed_snrs(snr, rng):
    clean = AudioClip(speech_like(1.0, snr))
    noise = AudioClip(rng.standard_normal(30000))
    mixed = mix_noise(clean, noise, snr, 5)
    assert abs(measure_snr(clean.samples, mixed.samples) - snr) < 0.01


def test_mix_noise_rejects_short_or_silent_noise(rng):
    clean = AudioClip(rng.standard_normal(1000))
    with pytest.raises(ValueError):
        mix_noise(clean, AudioClip(rng.standard_normal(500)), 10, 0)
    with pytest.raises(ValueError):
        mix_noise(clean, AudioClip(np.zeros(2000)), 10, 0)


def test_mix_noise_seeded_offset(rng):
    clean = AudioClip(rng.standard_normal(1000))
    noise = AudioClip(rng.standard_normal(5000))
    a, b = mix_noise(clean, noise, 5, 3), mix_noise(clean, noise, 5, 3)
    assert np.array_equal(a.samples, b.samples)


# ---- speech generator -----------------------------------------------------------

def test_speech_like_deterministic_and_bounded():
    a, b = speech_like(2.0, 42), speech_like(2.0, 42)
    assert np.array_equal(a, b)
    assert a.size == 32000 and np.max(np.abs(a)) == pytest.approx(0.9)
    assert not np.array_equal(a, speech_like(2.0, 43))
    # voiced energy lives mostly below 4 kHz
    spec = np.abs(np.fft.rfft(a)) ** 2
    f = np.fft.rfftfreq(a.size, 1 / FS)
    assert spec[f < 4000].sum() > 0.8 * spec.sum()


# ---- splits and manifests ------------------------------------------------------------

def test_ratio_counts():
    assert ratio_counts(10, (0.7, 0.1, 0.2)) == (7, 1, 2)
    assert ratio_counts(300, (0.8, 0.1, 0.1)) == (240, 30, 30)
    assert sum(ratio_counts(468, (0.7, 0.1, 0.2))) == 468
    with pytest.raises(ValueError):
        ratio_counts(10, (0.5, 0.1, 0.1))


@pytest.mark.parametrize("n,sizes", [(2500, (1500, 500, 500)), (10, (6, 2, 2))])
def test_fold_split_sizes(n, sizes):
    groups = fold_groups(n, 5, 0)
    entries = [DatasetEntry(f"c{i}", f"c{i}.wav", 1.0, fold=g) for i, g in enumerate(groups)]
    man = DatasetManifest(entries, "synthetic", {}, {"kind": "folds", "n_folds": 5})
    tested = []
    for k in range(5):
        got = tuple(len(man.subset(s, k)) for s in ("train", "val", "test"))
        assert got == sizes
        ids = [set(e.clip_id for e in man.subset(s, k)) for s in ("train", "val", "test")]
        assert not (ids[0] & ids[1] or ids[0] & ids[2] or ids[1] & ids[2])
        tested += [e.clip_id for e in man.subset("test", k)]
    assert sorted(tested) == sorted(e.clip_id for e in entries)


def test_entry_invariants():
    with pytest.raises(ValueError):
        DatasetEntry("a", "a.wav", 0.0, split="train")
    with pytest.raises(ValueError):
        DatasetEntry("a", "a.wav", 1.0)
    with pytest.raises(ValueError):
        DatasetEntry("a", "a.wav", 1.0, split="dev")
    with pytest.raises(ValueError):
        DatasetManifest([DatasetEntry("a", "a.wav", 1.0, split="train"),
                         DatasetEntry("b", "a.wav", 2.0, split="test")], "real", {}, {"kind": "ratio"})


def test_manifest_roundtrip(tmp_path):
    entries = [DatasetEntry("a", "a.wav", 1.5, split="train", drr_db=math.inf, scene={"x": 1}),
               DatasetEntry("b", "b.wav", 3.0, split="test", snr_db=10.0)]
    man = DatasetManifest(entries, "hybrid", {"k": 1}, {"kind": "ratio"})
    man.write(tmp_path / "m.jsonl")
    back = DatasetManifest.read(tmp_path / "m.jsonl")
    assert [e.to_json() for e in back.entries] == [e.to_json() for e in entries]
    assert back.entries[0].drr_db == math.inf
    assert back.config_hash == man.config_hash


# ---- builders -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def tiny_synthetic(tmp_path_factory):
    cfg = SyntheticBuildConfig(n_scenes=10, clip_duration_s=1.0, n_rays=2000, seed=3)
    d1, d2 = tmp_path_factory.mktemp("s1"), tmp_path_factory.mktemp("s2")
    return cfg, build_synthetic_dataset(cfg, d1), d1, d2


def test_synthetic_build(tiny_synthetic):
    cfg, man, d1, _ = tiny_synthetic
    assert len(man.entries) == 10
    for e in man.entries:
        clip = load_clip(d1 / e.clip_path)
        assert len(clip) == FS
        assert np.max(np.abs(clip.samples)) == pytest.approx(0.9, rel=1e-6)
        assert 1.0 <= e.distance_m < 14.0 and e.snr_db is None
    stats = dataset_stats(man)
    assert stats["split_sizes"]["fold0"] == {"train": 6, "val": 2, "test": 2}


def test_synthetic_build_is_deterministic(tiny_synthetic):
    cfg, man, d1, d2 = tiny_synthetic
    build_synthetic_dataset(cfg, d2)
    assert (d1 / "manifest.jsonl").read_bytes() == (d2 / "manifest.jsonl").read_bytes()
    for e in man.entries:
        assert (d1 / e.clip_path).read_bytes() == (d2 / e.clip_path).read_bytes()


def test_synthetic_build_with_noise(tmp_path):
    cfg = SyntheticBuildConfig(n_scenes=3, n_folds=0, split_ratios=(0.34, 0.33, 0.33),
                               clip_duration_s=0.5, n_rays=1000, snr_db=10.0)
    man = build_synthetic_dataset(cfg, tmp_path)
    assert all(e.snr_db == 10.0 for e in man.entries)
    assert sorted(e.split for e in man.entries) == ["test", "train", "val"]


def test_missing_corpus_names_layout(tmp_path):
    cfg = SyntheticBuildConfig(n_scenes=2, speech_dir=str(tmp_path / "nope"))
    with pytest.raises(FileNotFoundError, match="wav"):
        build_synthetic_dataset(cfg, tmp_path / "out")


def _write_rir_corpus(root, n, bad=()):
    root.mkdir()
    rows = []
    for j in range(n):
        h = np.zeros(2000)
        h[40 + j] = 1.0
        h[300:] = 0.05 * np.random.default_rng(j).standard_normal(1700) * np.exp(-np.arange(1700) / 300)
        save_clip(root / f"r{j}.wav", AudioClip(h))
        rows.append({"rir_path": f"r{j}.wav", "distance_m": "" if j in bad else 1.0 + j / 4,
                     "room_id": f"room{j % 3}"})
    with open(root / "index.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, ["rir_path", "distance_m", "room_id"])
        w.writeheader()
        w.writerows(rows)
    return root / "index.csv"


def test_hybrid_build(tmp_path):
    index = _write_rir_corpus(tmp_path / "rirs", 11, bad={4})
    speech = tmp_path / "speech"
    for i in range(3):
        save_clip(speech / f"s{i}.wav", AudioClip(speech_like(1.5, i)))
    man = build_hybrid_dataset(index, str(speech), HybridBuildConfig(clip_duration_s=1.0),
                               tmp_path / "out")
    assert len(man.entries) == 50
    assert man.report["skipped_rirs"] == ["r4.wav"]
    by_rir = {}
    for e in man.entries:
        by_rir.setdefault(e.scene["rir_path"], set()).add(e.split)
    assert all(len(s) == 1 for s in by_rir.values())
    counts = {s: sum(1 for v in by_rir.values() if v == {s}) for s in ("train", "val", "test")}
    assert counts == {"train": 7, "val": 1, "test": 2}
    assert all(len([e for e in man.entries if e.scene["rir_path"] == r]) == 5 for r in by_rir)


def _brute_windows(active, n_frames, win, hop):
    out = []
    for s in range(0, n_frames - win + 1, hop):
        if all(active.get(f) is not None and len(active[f]) == 1 and active[f][0][0] == "speech"
               for f in range(s, s + win)) and len({active[f][0][1] for f in range(s, s + win)}) == 1:
            out.append(s)
    return out


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 119), st.integers(1, 40), st.sampled_from(["speech", "dog"]),
                          st.sampled_from(["a", "b", "c"])), max_size=6),
       st.integers(5, 30), st.integers(1, 30))
def test_window_scan_matches_interval_oracle(events, win, hop):
    frames = {}
    for start, length, cls, src in events:
        for f in range(start, min(start + length, 120)):
            frames.setdefault(f, []).append((cls, src, 2.0))
    got = [s for s, _, _ in single_source_windows(frames, 120, win, hop, ("speech",))]
    assert got == _brute_windows(frames, 120, win, hop)


def _write_recording(tmp_path, stem, seconds, rows):
    audio, ann = tmp_path / "audio", tmp_path / "ann"
    audio.mkdir(exist_ok=True)
    ann.mkdir(exist_ok=True)
    save_clip(audio / f"{stem}.wav", AudioClip(speech_like(seconds, 0)))
    with open(ann / f"{stem}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame_index", "class_label", "source_id", "distance_m"])
        w.writerows(rows)
    return ann, audio


def test_ingest_single_source(tmp_path):
    ann, audio = _write_recording(tmp_path, "rec1", 6.0, [(f, "speech", "s1", 2.0) for f in range(40)])
    man = ingest_real_recordings(ann, audio, RealIngestConfig(), tmp_path / "out")
    assert len(man.entries) == 2
    assert all(e.distance_m == 2.0 and e.snr_db is None for e in man.entries)
    assert len(load_clip(tmp_path / "out" / man.entries[0].clip_path)) == 2 * FS


def test_ingest_overlap_gives_nothing(tmp_path):
    rows = [(f, "speech", s, 2.0) for f in range(60) for s in ("s1", "s2")]
    ann, audio = _write_recording(tmp_path, "rec2", 6.0, rows)
    man = ingest_real_recordings(ann, audio, RealIngestConfig(), tmp_path / "out")
    assert man.entries == [] and man.report["excerpts_per_file"] == {"rec2": 0}


def test_stats_cases():
    assert dataset_stats(DatasetManifest([], "real", {}, {"kind": "ratio"}))["distance_histogram"] == {}
    entries = [DatasetEntry(str(i), f"{i}.wav", d, split="train") for i, d in enumerate((1, 1, 3))]
    stats = dataset_stats(DatasetManifest(entries, "real", {}, {"kind": "ratio"}), ((1, 2), (2, 4)))
    assert stats["distance_histogram"] == {"[1,2)": 2, "[2,4)": 1, "other": 0}
    assert fit_length(np.ones(3), 5).tolist() == [1, 1, 1, 0, 0]
