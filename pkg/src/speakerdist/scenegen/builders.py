"""Dataset builders for the three realism levels, plus summary statistics."""
import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from ..bins import SYNTHETIC_BINS, BinSpec
from ..parallel import pmap
from ..roomsim import (Rir, RoomSampling, compute_drr, detect_direct_delay, fit_rt60,
                       sample_scene, synthesize_rir)
from .audio import (PEAK_LEVEL, SAMPLE_RATE, AudioClip, convolve_scene, mix_noise,
                    peak_normalize, read_wav, resample, save_clip)
from .manifest import DatasetEntry, DatasetManifest
from .speech import ClipSource

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"


@dataclass
class SyntheticBuildConfig:
    """Simulated-RIR dataset.

    ``n_folds > 1`` gives a k-fold split by scene (test group i, validation
    group i+1, training on the rest); ``n_folds = 0`` uses ``split_ratios``
    (train, val, test) instead.
    """
    n_scenes: int = 2500
    n_folds: int = 5
    split_ratios: tuple = (0.7, 0.1, 0.2)
    clip_duration_s: float = 10.0
    distance_range: tuple = (1.0, 14.0)
    snr_db: float = None
    speech_dir: str = None
    noise_dir: str = None
    peak_level: float = PEAK_LEVEL
    n_rays: int = 10000
    room: dict = field(default_factory=lambda: asdict(RoomSampling()))
    seed: int = 0


@dataclass
class HybridBuildConfig:
    clips_per_rir: int = 5
    clip_duration_s: float = 10.0
    split_ratios: tuple = (0.7, 0.1, 0.2)
    snr_db: float = None
    noise_dir: str = None
    peak_level: float = PEAK_LEVEL
    seed: int = 0


@dataclass
class RealIngestConfig:
    excerpt_s: float = 2.0
    hop_s: float = None            # defaults to excerpt_s (non-overlapping)
    frame_s: float = 0.1
    speech_classes: tuple = ("speech",)
    channel: int = 0
    split_ratios: tuple = (0.7, 0.1, 0.2)
    seed: int = 0


def ratio_counts(n, ratios):
    """(train, val, test) sizes: val and test rounded, train takes the rest."""
    r = np.asarray(ratios, dtype=float)
    if r.shape != (3,) or np.any(r < 0) or not math.isclose(r.sum(), 1.0, abs_tol=1e-9):
        raise ValueError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")
    n_val, n_test = int(round(r[1] * n)), int(round(r[2] * n))
    return n - n_val - n_test, n_val, n_test


def ratio_split(n, ratios, seed):
    """Seeded assignment of ``n`` items to train/val/test."""
    n_train, n_val, _ = ratio_counts(n, ratios)
    order = np.random.default_rng(seed).permutation(n)
    labels = np.empty(n, dtype=object)
    labels[order[:n_train]] = "train"
    labels[order[n_train:n_train + n_val]] = "val"
    labels[order[n_train + n_val:]] = "test"
    return labels.tolist()


def fold_groups(n, n_folds, seed):
    """Seeded assignment of ``n`` items to ``n_folds`` near-equal groups."""
    if n_folds < 2:
        raise ValueError("need at least 2 folds")
    order = np.random.default_rng(seed).permutation(n)
    groups = np.empty(n, dtype=int)
    for g, idx in enumerate(np.array_split(order, n_folds)):
        groups[idx] = g
    return groups.tolist()


@lru_cache(maxsize=8)
def _source(directory, kind):
    return ClipSource(directory, kind)


def _finish_clip(wet, cfg, noise_src, key):
    wet = peak_normalize(wet, cfg["peak_level"])
    if cfg["snr_db"] is not None:
        noise = noise_src.excerpt(key + [2], cfg["clip_duration_s"])
        wet = mix_noise(wet, noise, cfg["snr_db"], key + [3])
    return wet


def _synthetic_entry(job):
    i, cfg, out_dir = job
    key = [cfg["seed"], i]
    scene = sample_scene(key, tuple(cfg["distance_range"]), config=RoomSampling(**cfg["room"]))
    rir = synthesize_rir(scene, n_rays=cfg["n_rays"])
    dry = _source(cfg["speech_dir"], "speech").excerpt(key + [1], cfg["clip_duration_s"])
    wet = convolve_scene(dry, rir, cfg["clip_duration_s"])
    wet = _finish_clip(wet, cfg, _source(cfg["noise_dir"], "noise"), key)
    rel = f"clips/syn{i:05d}.wav"
    save_clip(Path(out_dir) / rel, wet)
    scene_d = scene.to_dict()
    scene_d["rir_flags"] = list(rir.flags)
    return dict(clip_id=f"syn{i:05d}", clip_path=rel, distance_m=scene.distance_m,
                snr_db=cfg["snr_db"], rt60_s=rir.rt60_s, drr_db=rir.drr_db,
                room_id=f"room{i:05d}", source_id=dry.source_id, scene=scene_d)


def build_synthetic_dataset(config, out_dir, workers=None):
    """Simulate, convolve, optionally add noise, and write clips + manifest."""
    cfg = asdict(config)
    cfg["distance_range"] = list(cfg["distance_range"])
    cfg["split_ratios"] = list(cfg["split_ratios"])
    if cfg["n_scenes"] < 1:
        raise ValueError("n_scenes must be >= 1")
    # fail before any work if a corpus is missing
    _source(cfg["speech_dir"], "speech")
    if cfg["snr_db"] is not None:
        _source(cfg["noise_dir"], "noise")
    out_dir = Path(out_dir)
    rows = pmap(_synthetic_entry, [(i, cfg, str(out_dir)) for i in range(cfg["n_scenes"])], workers)
    if cfg["n_folds"] > 1:
        groups = fold_groups(len(rows), cfg["n_folds"], cfg["seed"])
        entries = [DatasetEntry(fold=g, **r) for r, g in zip(rows, groups)]
        policy = {"kind": "folds", "n_folds": cfg["n_folds"]}
    else:
        labels = ratio_split(len(rows), cfg["split_ratios"], cfg["seed"])
        entries = [DatasetEntry(split=s, **r) for r, s in zip(rows, labels)]
        policy = {"kind": "ratio", "ratios": cfg["split_ratios"]}
    man = DatasetManifest(entries, "synthetic", cfg, policy)
    man.write(out_dir / MANIFEST_NAME)
    return man


def load_measured_rir(path):
    """Measured RIR as :class:`Rir` at 16 kHz with detected direct delay."""
    taps, sr = read_wav(path)
    taps = resample(taps, sr)
    rir = Rir(taps, SAMPLE_RATE, direct_delay_samples=detect_direct_delay(taps))
    return rir.with_(rt60_s=fit_rt60(taps, SAMPLE_RATE).rt60_s, drr_db=compute_drr(rir))


def read_rir_index(path):
    """Rows of a measured-RIR CSV (rir_path, distance_m, room_id).

    Returns ``(rows, skipped)``; rows whose distance is missing or not a
    positive number are skipped with a warning.
    """
    path = Path(path)
    if path.is_dir():
        cands = sorted(path.glob("*.csv"))
        if len(cands) != 1:
            raise FileNotFoundError(f"{path}: expected exactly one CSV index with columns rir_path,distance_m,room_id")
        path = cands[0]
    rows, skipped = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"rir_path", "distance_m", "room_id"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            try:
                d = float(row["distance_m"])
            except (TypeError, ValueError):
                d = float("nan")
            if not d > 0:
                log.warning("skipping %s: no usable distance annotation", row["rir_path"])
                skipped.append(row["rir_path"])
                continue
            p = Path(row["rir_path"])
            rows.append({"rir_path": str(p if p.is_absolute() else path.parent / p),
                         "distance_m": d, "room_id": row["room_id"]})
    return rows, skipped


def _hybrid_entry(job):
    j, k, row, split, cfg, speech_dir, out_dir = job
    key = [cfg["seed"], j, k]
    rir = load_measured_rir(row["rir_path"])
    dry = _source(speech_dir, "speech").excerpt(key + [1], cfg["clip_duration_s"])
    wet = convolve_scene(dry, rir, cfg["clip_duration_s"])
    wet = _finish_clip(wet, cfg, _source(cfg["noise_dir"], "noise"), key)
    cid = f"hyb{j:04d}_{k}"
    rel = f"clips/{cid}.wav"
    save_clip(Path(out_dir) / rel, wet)
    return dict(clip_id=cid, clip_path=rel, distance_m=row["distance_m"], split=split,
                snr_db=cfg["snr_db"], rt60_s=rir.rt60_s, drr_db=rir.drr_db,
                room_id=row["room_id"], source_id=dry.source_id,
                scene={"rir_path": row["rir_path"], "rir_index": j})


def build_hybrid_dataset(rir_corpus, speech_dir, config, out_dir, workers=None):
    """Measured RIRs x dry clips; the split is drawn per RIR so none leaks."""
    cfg = asdict(config)
    cfg["split_ratios"] = list(cfg["split_ratios"])
    _source(speech_dir, "speech")
    rows, skipped = read_rir_index(rir_corpus)
    if not rows:
        raise ValueError(f"{rir_corpus}: no RIRs with distance annotations")
    labels = ratio_split(len(rows), cfg["split_ratios"], cfg["seed"])
    jobs = [(j, k, row, labels[j], cfg, speech_dir, str(out_dir))
            for j, row in enumerate(rows) for k in range(cfg["clips_per_rir"])]
    entries = [DatasetEntry(**r) for r in pmap(_hybrid_entry, jobs, workers)]
    man = DatasetManifest(entries, "hybrid", dict(cfg, rir_corpus=str(rir_corpus), speech_dir=speech_dir),
                          {"kind": "ratio", "ratios": cfg["split_ratios"], "unit": "rir"},
                          report={"n_rirs": len(rows), "skipped_rirs": skipped})
    man.write(Path(out_dir) / MANIFEST_NAME)
    return man


def read_frame_annotations(path):
    """frame index -> list of (class_label, source_id, distance_m)."""
    frames = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            frames.setdefault(int(row["frame_index"]), []).append(
                (str(row["class_label"]).strip(), str(row["source_id"]).strip(), float(row["distance_m"])))
    return frames


def single_source_windows(frames, n_frames, win, hop, speech_classes):
    """Start frames of windows where one speech source alone is active throughout.

    Returns a list of ``(start_frame, source_id, mean_distance)``.
    """
    out = []
    for s in range(0, n_frames - win + 1, hop):
        acts = [frames.get(f, []) for f in range(s, s + win)]
        if not all(len(a) == 1 for a in acts):
            continue
        cls = {a[0][0] for a in acts}
        src = {a[0][1] for a in acts}
        if len(src) == 1 and cls <= set(speech_classes):
            out.append((s, src.pop(), float(np.mean([a[0][2] for a in acts]))))
    return out


def ingest_real_recordings(annotations, audio_dir, config, out_dir):
    """Cut single-speaker excerpts from annotated recordings.

    ``annotations`` is a directory of CSVs (frame_index, class_label,
    source_id, distance_m; one frame per ``config.frame_s``); each
    ``<stem>.csv`` describes ``<audio_dir>/<stem>.wav``.
    """
    cfg = asdict(config)
    cfg["speech_classes"] = [str(c) for c in cfg["speech_classes"]]
    cfg["split_ratios"] = list(cfg["split_ratios"])
    ann_dir, audio_dir, out_dir = Path(annotations), Path(audio_dir), Path(out_dir)
    if not ann_dir.is_dir():
        raise FileNotFoundError(f"annotation directory {ann_dir} not found")
    win = int(round(cfg["excerpt_s"] / cfg["frame_s"]))
    hop = int(round((cfg["hop_s"] or cfg["excerpt_s"]) / cfg["frame_s"]))
    frame_len = int(round(cfg["frame_s"] * SAMPLE_RATE))
    rows, per_file = [], {}
    for ann in sorted(ann_dir.glob("*.csv")):
        wav = audio_dir / f"{ann.stem}.wav"
        if not wav.exists():
            log.warning("no audio for annotation %s", ann.name)
            per_file[ann.stem] = None
            continue
        x, sr = read_wav(wav, cfg["channel"])
        x = resample(x, sr)
        n_frames = x.size // frame_len
        wins = single_source_windows(read_frame_annotations(ann), n_frames, win, hop, cfg["speech_classes"])
        per_file[ann.stem] = len(wins)
        for s, src, dist in wins:
            cid = f"{ann.stem}_{s:06d}"
            rel = f"clips/{cid}.wav"
            seg = x[s * frame_len:(s + win) * frame_len]
            save_clip(out_dir / rel, AudioClip(seg, source_id=src))
            rows.append(dict(clip_id=cid, clip_path=rel, distance_m=dist, room_id=ann.stem,
                             source_id=src, scene={"file": wav.name, "start_s": s * cfg["frame_s"]}))
    labels = ratio_split(len(rows), cfg["split_ratios"], cfg["seed"])
    entries = [DatasetEntry(split=lab, **r) for r, lab in zip(rows, labels)]
    if not entries:
        log.warning("no single-source excerpts found under %s", ann_dir)
    man = DatasetManifest(entries, "real", dict(cfg, annotations=str(ann_dir), audio_dir=str(audio_dir)),
                          {"kind": "ratio", "ratios": cfg["split_ratios"]},
                          report={"excerpts_per_file": per_file})
    man.write(out_dir / MANIFEST_NAME)
    return man


def dataset_stats(manifest, bins=SYNTHETIC_BINS):
    """Distance histogram, RT60 percentiles and split sizes of a manifest."""
    bins = bins if isinstance(bins, BinSpec) else BinSpec(bins)
    ent = manifest.entries
    stats = {"n_entries": len(ent), "distance_histogram": {}, "rt60_percentiles": None,
             "split_sizes": {}}
    if not ent:
        return stats
    idx = bins.assign([e.distance_m for e in ent])
    hist = {lab: int(np.sum(idx == i)) for i, lab in enumerate(bins.labels)}
    hist["other"] = int(np.sum(idx < 0))
    stats["distance_histogram"] = hist
    rt = np.array([e.rt60_s for e in ent if e.rt60_s is not None and np.isfinite(e.rt60_s)])
    if rt.size:
        p10, p50, p90 = np.percentile(rt, [10, 50, 90])
        stats["rt60_percentiles"] = {"p10": float(p10), "p50": float(p50), "p90": float(p90)}
    if manifest.split_policy.get("kind") == "folds":
        stats["split_sizes"] = {
            f"fold{k}": {s: len(manifest.subset(s, k)) for s in ("train", "val", "test")}
            for k in range(manifest.n_folds)}
    else:
        stats["split_sizes"] = {s: len(manifest.subset(s)) for s in ("train", "val", "test")}
    return stats
