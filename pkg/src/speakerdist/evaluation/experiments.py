"""Checkpoint evaluation, prediction dumps, SNR sweeps, cross-corpus matrices, ablations."""
import itertools
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from ..bins import SYNTHETIC_BINS, BinSpec
from ..features import extract_features, extraction_hash, select_channels
from ..model import ATTENTION_MODES, FEATURE_SUBSETS, KERNELS, DistanceCRNN, ModelConfig, load_checkpoint
from ..scenegen import DatasetManifest, load_clip
from ..training import TrainConfig, load_feature_arrays, predict, train
from .metrics import binned_report, drr_stratified_errors, error_vs_distance

log = logging.getLogger(__name__)


def _manifest(m):
    return m if isinstance(m, DatasetManifest) else DatasetManifest.read(m)


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def write_predictions(path, records):
    """JSON-lines dump: clip_id, y, y_hat, optional framewise path, metadata."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            r = dict(r, metadata={k: _clean(v) for k, v in r.get("metadata", {}).items()})
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    return path


def read_predictions(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                r = json.loads(line)
                r["metadata"] = {k: float(v) if v in ("inf", "-inf", "nan") else v
                                 for k, v in r.get("metadata", {}).items()}
                out.append(r)
    return out


def report_from_records(records, bins=SYNTHETIC_BINS, ci_mode="per_sample", config=None):
    """EvalReport (with distance and DRR curves) from prediction records."""
    pairs = [(r["y"], r["y_hat"], r.get("metadata", {})) for r in records]
    rep = binned_report(pairs, bins, ci_mode, config)
    if pairs:
        rep.curves["error_vs_distance"] = error_vs_distance(pairs)
        try:
            rep.curves["error_vs_drr"] = drr_stratified_errors(pairs)
        except ValueError:
            pass
    return rep


def check_compatible(model, blob, n_frames):
    if blob.get("extraction_hash") not in (None, extraction_hash()):
        raise ValueError("checkpoint was trained on a different feature extraction config")
    if model.cfg.n_frames != n_frames:
        raise ValueError(f"checkpoint expects T={model.cfg.n_frames} frames, data has {n_frames}; "
                         "corpora must share the clip duration")


def evaluate_checkpoint(checkpoint, manifest, split="test", fold=0, bins=SYNTHETIC_BINS,
                        ci_mode="per_sample", dump_path=None, cache_dir=None, data=None):
    """Predict ``split`` of ``manifest`` and build the report.

    Returns ``(report, records)``; records are also dumped when
    ``dump_path`` is given.
    """
    manifest = _manifest(manifest)
    model, blob = load_checkpoint(checkpoint)
    entries = manifest.subset(split, fold)
    x, y = data if data is not None else load_feature_arrays(
        manifest, entries, model.cfg.feature_subset, cache_dir)
    check_compatible(model, blob, x.shape[1])
    y_hat, _ = predict(model, x)
    records = []
    for e, yh in zip(entries, y_hat.tolist()):
        meta = {"fold": fold, "drr_db": e.drr_db, "rt60_s": e.rt60_s, "snr_db": e.snr_db,
                "room_id": e.room_id}
        records.append({"clip_id": e.clip_id, "y": e.distance_m, "y_hat": float(yh), "metadata": meta})
    if dump_path is not None:
        write_predictions(dump_path, records)
    cfg = {"checkpoint": str(checkpoint), "manifest_hash": manifest.config_hash, "split": split,
           "fold": fold}
    return report_from_records(records, bins, ci_mode, cfg), records


def evaluate_folds(checkpoints, manifest, bins=SYNTHETIC_BINS, cache_dir=None):
    """Pool the test folds of a k-fold run; intervals are t-intervals over folds."""
    records = []
    for k, ck in enumerate(checkpoints):
        records += evaluate_checkpoint(ck, manifest, "test", k, bins, cache_dir=cache_dir)[1]
    return report_from_records(records, bins, "per_fold", {"n_folds": len(checkpoints)}), records


def snr_sweep_eval(model_family, datasets_by_snr, bins=SYNTHETIC_BINS, out_dir=None):
    """One report per (SNR, feature set); missing pairings are None.

    ``model_family`` maps SNR -> feature set -> checkpoint; ``datasets_by_snr``
    maps SNR -> manifest.  With ``out_dir`` each cell's predictions are dumped
    to ``snr_<snr>_<feature set>.jsonl`` so it can be replayed.
    """
    table = {}
    for snr, by_feat in model_family.items():
        for feat, ck in by_feat.items():
            ds = datasets_by_snr.get(snr)
            if ds is None or ck is None:
                table[(snr, feat)] = None
                continue
            dump = Path(out_dir) / f"snr_{snr:g}_{feat}.jsonl" if out_dir else None
            table[(snr, feat)] = evaluate_checkpoint(ck, ds, bins=bins, dump_path=dump)[0]
    return table


def sweep_rows(table):
    rows = []
    for (snr, feat), rep in sorted(table.items(), key=lambda kv: (-kv[0][0], kv[0][1])):
        avg = rep.average if rep else None
        rows.append({"snr_db": snr, "feature_set": feat, "l1": avg.l1 if avg else None,
                     "l1_ci": avg.l1_ci if avg else None, "rl1": avg.rl1 if avg else None,
                     "rl1_ci": avg.rl1_ci if avg else None,
                     "status": "ok" if rep else "absent"})
    return rows


@dataclass
class CrossCorpusResult:
    names: list
    matrix: dict                     # train corpus -> test corpus -> average L1
    reports: dict = field(default_factory=dict)
    finetune: bool = False

    def rows(self):
        return [{"train": a, **{b: self.matrix[a][b] for b in self.names}} for a in self.names]


def cross_corpus_matrix(checkpoints_by_corpus, datasets_by_corpus, finetune=False, train_cfg=None,
                        out_dir=None, bins_by_corpus=None):
    """Average test L1 for every (train corpus, test corpus) pair.

    Diagonal cells are plain in-corpus evaluations.  With ``finetune`` the
    off-diagonal cells first continue training the source checkpoint on the
    target corpus's train split.
    """
    names = list(checkpoints_by_corpus)
    if set(names) != set(datasets_by_corpus):
        raise ValueError("checkpoints and datasets must cover the same corpora")
    if finetune and out_dir is None:
        raise ValueError("fine-tuning needs an output directory")
    bins_by_corpus = bins_by_corpus or {}
    matrix, reports = {a: {} for a in names}, {}
    for a, b in itertools.product(names, names):
        ck, ds = checkpoints_by_corpus[a], datasets_by_corpus[b]
        if finetune and a != b:
            model, _ = load_checkpoint(ck)
            cfg = replace(train_cfg or TrainConfig(), finetune_from=str(ck))
            ck = train(ds, model.cfg, cfg, Path(out_dir) / f"finetune_{a}_to_{b}").checkpoint
        rep, _ = evaluate_checkpoint(ck, ds, bins=bins_by_corpus.get(b, SYNTHETIC_BINS))
        matrix[a][b] = rep.average.l1
        reports[(a, b)] = rep
    return CrossCorpusResult(names, matrix, reports, finetune)


def architecture_grid(base=None):
    """Kernel shape x recurrent depth (9 configs), depth-major."""
    base = base or ModelConfig()
    return [replace(base, kernel_shape=k, num_recurrent_layers=n)
            for n in (0, 1, 2) for k in ("time", "square", "frequency")]


def attention_grid(base=None):
    base = base or ModelConfig()
    return [replace(base, attention_mode=m) for m in ATTENTION_MODES]


def feature_grid(base=None):
    base = base or ModelConfig()
    return [replace(base, feature_subset=s) for s in FEATURE_SUBSETS]


def shape_grid(base=None):
    """Every valid kernel x depth x attention x feature-subset cell."""
    base = base or ModelConfig()
    out = []
    for k, n, a, s in itertools.product(KERNELS, (0, 1, 2), ATTENTION_MODES, FEATURE_SUBSETS):
        if a == "spectrogram_only" and s == "phase_only":
            continue
        out.append(replace(base, kernel_shape=k, num_recurrent_layers=n, attention_mode=a,
                           feature_subset=s))
    return out


def ablation_columns(bins=SYNTHETIC_BINS):
    bins = bins if isinstance(bins, BinSpec) else BinSpec(bins)
    cols = ["kernel_shape", "params", "num_recurrent_layers", "attention_mode", "feature_subset",
            "l1", "l1_ci", "rl1", "rl1_ci"]
    for lab in bins.labels:
        cols += [f"l1 {lab}", f"rl1 {lab}"]
    return cols + ["status"]


def ablation_grid(grid, manifest, train_cfg, out_dir, bins=SYNTHETIC_BINS):
    """Train and test each config under the same seed and split.

    A failing config yields a row with ``status`` "failed: ..." and the grid
    continues.
    """
    manifest = _manifest(manifest)
    out_dir = Path(out_dir)
    bins = bins if isinstance(bins, BinSpec) else BinSpec(bins)
    data = {}
    rows = []
    for i, cfg in enumerate(grid):
        row = {"kernel_shape": cfg.kernel_shape, "num_recurrent_layers": cfg.num_recurrent_layers,
               "attention_mode": cfg.attention_mode, "feature_subset": cfg.feature_subset}
        try:
            if cfg.feature_subset not in data:
                data[cfg.feature_subset] = tuple(
                    load_feature_arrays(manifest, manifest.subset(s, train_cfg.fold), cfg.feature_subset,
                                        train_cfg.feature_cache) for s in ("train", "val", "test"))
            tr, va, te = data[cfg.feature_subset]
            res = train(manifest, cfg, train_cfg, out_dir / f"cfg{i:02d}", data=(tr, va))
            rep, _ = evaluate_checkpoint(res.checkpoint, manifest, fold=train_cfg.fold, bins=bins,
                                         dump_path=out_dir / f"cfg{i:02d}" / "predictions.jsonl", data=te)
            model, _ = load_checkpoint(res.checkpoint)
            row.update(params=model.parameter_breakdown()["total"], l1=rep.average.l1,
                       l1_ci=rep.average.l1_ci, rl1=rep.average.rl1, rl1_ci=rep.average.rl1_ci,
                       status="ok")
            for r in rep.bin_rows:
                row[f"l1 {r.label}"] = r.l1
                row[f"rl1 {r.label}"] = r.rl1
        except Exception as err:  # one bad cell must not stop the grid
            log.exception("ablation config %d failed", i)
            row["status"] = f"failed: {err}"
        rows.append(row)
    return rows


def inspect_clip(checkpoint, clip_path):
    """Magnitude spectrogram, attention maps and predictions for one clip."""
    model, blob = load_checkpoint(checkpoint)
    if model.cfg.attention_mode == "none":
        raise ValueError("checkpoint has no attention module (attention_mode=none)")
    feat = extract_features(load_clip(clip_path))
    check_compatible(model, blob, feat.n_frames)
    x = torch.from_numpy(select_channels(feat, model.cfg.feature_subset).data[None])
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        y, yt, m = model(x.to(dtype))
    return {"spectrogram": feat.data[..., 0], "attention": np.moveaxis(m[0].numpy(), -1, 0),
            "y_hat": float(y[0]), "yt_hat": yt[0].numpy()}
