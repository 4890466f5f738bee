"""Dual utterance/frame loss, plateau learning-rate schedule and the training loop."""
import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .features import FeatureCache, extract_features, extraction_hash, select_channels
from .model import DistanceCRNN, ModelConfig, load_checkpoint, save_checkpoint
from .scenegen import DatasetManifest, load_clip

log = logging.getLogger(__name__)

LOG_FIELDS = ("epoch", "train_loss", "val_mse", "val_l1", "lr")


class DivergenceError(RuntimeError):
    """Raised when the loss stops being finite; ``checkpoint`` is the last good one."""

    def __init__(self, msg, checkpoint=None):
        super().__init__(msg)
        self.checkpoint = checkpoint


@dataclass
class TrainConfig:
    epochs: int = 60
    learning_rate: float = 1e-3
    batch_size: int = 16
    lr_decay_factor: float = 0.8
    plateau_patience_epochs: int = 5
    grad_clip_norm: float = 5.0
    seed: int = 0
    fold: int = 0
    finetune_from: str = None
    feature_cache: str = None

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.plateau_patience_epochs < 1:
            raise ValueError("epochs >= 0, batch_size >= 1 and patience >= 1 required")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.lr_decay_factor < 1:
            raise ValueError("lr_decay_factor must be in (0, 1)")


def dual_loss(y_hat, yt_hat, y, reduction="mean"):
    """(y - y_hat)^2 + ||y_t - yt_hat||^2 per sample, averaged over the batch.

    ``y_t`` is ``y`` repeated over frames (static sources).
    """
    if not (torch.isfinite(y_hat).all() and torch.isfinite(yt_hat).all()):
        raise DivergenceError("non-finite prediction")
    per = (y - y_hat) ** 2 + ((y[:, None] - yt_hat) ** 2).sum(dim=1)
    return per.mean() if reduction == "mean" else per


class PlateauSchedule:
    """Multiply the rate by ``factor`` after ``patience`` epochs without improvement.

    The counter resets on every improvement and after every reduction.
    """

    def __init__(self, lr, factor=0.8, patience=5):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.best = math.inf
        self.bad_epochs = 0

    def step(self, metric):
        if metric < self.best:
            self.best = metric
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr *= self.factor
                self.bad_epochs = 0
        return self.lr


def load_feature_arrays(manifest, entries, subset="all", cache_dir=None):
    """Stack features and labels of ``entries`` into (X: N x T x F x C, y: N)."""
    if not entries:
        raise ValueError("empty split")
    cache = FeatureCache(cache_dir) if cache_dir else None
    feats = []
    for e in entries:
        path = manifest.resolve(e)
        f = cache.get(path, load_clip) if cache else extract_features(load_clip(path))
        feats.append(select_channels(f, subset).data)
    lengths = {f.shape[0] for f in feats}
    if len(lengths) > 1:
        raise ValueError(f"clips have different frame counts {sorted(lengths)}; "
                         "datasets must be built with one clip duration")
    x = torch.from_numpy(np.stack(feats))
    y = torch.tensor([e.distance_m for e in entries], dtype=torch.float32)
    return x, y


@torch.no_grad()
def predict(model, x, batch_size=32):
    """Eval-mode predictions: (utterance N, framewise N x T)."""
    model.eval()
    dtype = next(model.parameters()).dtype
    ys, yts = [], []
    for i in range(0, len(x), batch_size):
        y, yt, _ = model(x[i:i + batch_size].to(dtype))
        ys.append(y)
        yts.append(yt)
    return torch.cat(ys), torch.cat(yts)


def validation_metrics(model, x, y):
    y_hat, _ = predict(model, x)
    err = y_hat.double() - y.double()
    return float((err ** 2).mean()), float(err.abs().mean())


@dataclass
class TrainResult:
    checkpoint: Path
    log_path: Path
    best_val_mse: float
    best_epoch: int
    history: list = field(default_factory=list)


def _build_model(model_cfg, train_cfg, n_frames):
    if train_cfg.finetune_from:
        model, blob = load_checkpoint(train_cfg.finetune_from)
        if model.cfg.n_frames != n_frames:
            raise ValueError(f"checkpoint expects T={model.cfg.n_frames} frames, data has {n_frames}")
        return model, {"finetuned_from": str(train_cfg.finetune_from),
                       "source_training_state": blob["training_state"]}
    return DistanceCRNN(replace(model_cfg, n_frames=n_frames), seed=train_cfg.seed), {}


def train(manifest, model_cfg, train_cfg, out_dir, data=None):
    """Optimise on the manifest's train split, keeping the best-validation checkpoint.

    ``data`` optionally supplies preloaded ``((x_train, y_train), (x_val, y_val))``.
    Epoch 0 in the log is the validation score before any update.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if isinstance(manifest, (str, Path)):
        manifest = DatasetManifest.read(manifest)
    if data is None:
        data = (load_feature_arrays(manifest, manifest.subset("train", train_cfg.fold),
                                    model_cfg.feature_subset, train_cfg.feature_cache),
                load_feature_arrays(manifest, manifest.subset("val", train_cfg.fold),
                                    model_cfg.feature_subset, train_cfg.feature_cache))
    (xt, yt), (xv, yv) = data
    torch.manual_seed(train_cfg.seed)
    model, provenance = _build_model(model_cfg, train_cfg, xt.shape[1])
    dtype = next(model.parameters()).dtype
    opt = torch.optim.Adam(model.parameters(), lr=train_cfg.learning_rate)
    sched = PlateauSchedule(train_cfg.learning_rate, train_cfg.lr_decay_factor,
                            train_cfg.plateau_patience_epochs)
    ckpt = out_dir / "best.pt"
    log_path = out_dir / "train_log.csv"
    gen = torch.Generator().manual_seed(train_cfg.seed)
    state = {"optimizer": "adam", "betas": [0.9, 0.999], "train_config": asdict(train_cfg),
             "manifest_hash": manifest.config_hash, **provenance}

    def checkpoint(epoch, mse, l1):
        save_checkpoint(ckpt, model, extraction_hash(),
                        dict(state, epoch=epoch, lr=sched.lr, val_mse=mse, val_l1=l1))

    mse, l1 = validation_metrics(model, xv, yv)
    history = [{"epoch": 0, "train_loss": "", "val_mse": mse, "val_l1": l1, "lr": sched.lr}]
    best, best_epoch = mse, 0
    checkpoint(0, mse, l1)
    with open(log_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, LOG_FIELDS)
        writer.writeheader()
        writer.writerow(history[0])
        for epoch in range(1, train_cfg.epochs + 1):
            model.train()
            order = torch.randperm(len(xt), generator=gen)
            total, seen = 0.0, 0
            for i in range(0, len(xt), train_cfg.batch_size):
                idx = order[i:i + train_cfg.batch_size]
                if len(idx) < 2 and len(xt) > 1:
                    continue  # batch norm needs more than one sample
                y_hat, yt_hat, _ = model(xt[idx].to(dtype))
                try:
                    loss = dual_loss(y_hat, yt_hat, yt[idx].to(dtype))
                except DivergenceError as err:
                    raise DivergenceError(f"epoch {epoch}: {err}", ckpt) from None
                if not torch.isfinite(loss):
                    raise DivergenceError(f"epoch {epoch}: loss is {loss.item()}", ckpt)
                opt.zero_grad()
                loss.backward()
                torch.nn.utils.clip_grad_norm_(model.parameters(), train_cfg.grad_clip_norm)
                opt.step()
                total += loss.item() * len(idx)
                seen += len(idx)
            mse, l1 = validation_metrics(model, xv, yv)
            row = {"epoch": epoch, "train_loss": total / max(seen, 1), "val_mse": mse,
                   "val_l1": l1, "lr": sched.lr}
            history.append(row)
            writer.writerow(row)
            fh.flush()
            if mse < best:
                best, best_epoch = mse, epoch
                checkpoint(epoch, mse, l1)
            new_lr = sched.step(mse)
            for g in opt.param_groups:
                g["lr"] = new_lr
            log.info("epoch %d train %.4f val_mse %.4f val_l1 %.4f lr %.2e",
                     epoch, row["train_loss"], mse, l1, row["lr"])
    return TrainResult(ckpt, log_path, best, best_epoch, history)


def train_snr_family(datasets_by_snr, snr_list, model_cfg, train_cfg, out_dir):
    """One independently seeded model per SNR; writes ``family.json``.

    SNRs without a dataset are skipped and listed under ``"skipped"``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    index, skipped = {}, []
    for snr in snr_list:
        path = datasets_by_snr.get(snr)
        if path is None or not Path(path).exists():
            log.warning("no dataset for SNR %s dB, skipping", snr)
            skipped.append(snr)
            continue
        res = train(path, model_cfg, train_cfg, out_dir / f"snr_{snr:g}")
        index[f"{snr:g}"] = {"checkpoint": str(res.checkpoint), "best_val_mse": res.best_val_mse,
                             "manifest": str(path)}
    family = {"models": index, "skipped": skipped, "model_config": model_cfg.to_dict()}
    (out_dir / "family.json").write_text(json.dumps(family, indent=1, sort_keys=True))
    return family


def read_log(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
