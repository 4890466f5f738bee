"""Attention CRNN distance regressor.

Input layout is batch x T x F x C (the feature-tensor layout); internally
the convolutions run on batch x C x T x F.
"""
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import torch
from torch import nn

KERNELS = {"time": (3, 1), "square": (3, 3), "frequency": (1, 3)}
ATTENTION_MODES = ("none", "spectrogram_only", "all_channels")
FEATURE_SUBSETS = {"all": 3, "magnitude_only": 1, "phase_only": 2}


@dataclass(frozen=True)
class ModelConfig:
    kernel_shape: str = "frequency"
    num_recurrent_layers: int = 2
    attention_mode: str = "all_channels"
    feature_subset: str = "all"
    conv_filters: tuple = (8, 32, 128)
    freq_pool: tuple = (8, 8, 2)
    attention_filters: tuple = (16, 64)
    recurrent_width: int = 128
    head_width: int = 128
    elu_alpha: float = 1.0
    n_bins: int = 257
    n_frames: int = 624
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "conv_filters", tuple(int(v) for v in self.conv_filters))
        object.__setattr__(self, "freq_pool", tuple(int(v) for v in self.freq_pool))
        object.__setattr__(self, "attention_filters", tuple(int(v) for v in self.attention_filters))
        if self.kernel_shape not in KERNELS:
            raise ValueError(f"kernel_shape must be one of {sorted(KERNELS)}")
        if self.num_recurrent_layers not in (0, 1, 2):
            raise ValueError("num_recurrent_layers must be 0, 1 or 2")
        if self.attention_mode not in ATTENTION_MODES:
            raise ValueError(f"attention_mode must be one of {ATTENTION_MODES}")
        if self.feature_subset not in FEATURE_SUBSETS:
            raise ValueError(f"feature_subset must be one of {sorted(FEATURE_SUBSETS)}")
        if self.attention_mode == "spectrogram_only" and self.feature_subset == "phase_only":
            raise ValueError("spectrogram_only attention needs the magnitude channel")
        if len(self.conv_filters) != len(self.freq_pool):
            raise ValueError("conv_filters and freq_pool must have the same length")
        if min(self.conv_filters + self.attention_filters) < 1 or self.recurrent_width < 1 \
                or self.head_width < 1 or self.n_frames < 1:
            raise ValueError("widths and n_frames must be positive")
        if self.pooled_bins < 1:
            raise ValueError(f"frequency pooling {self.freq_pool} collapses {self.n_bins} bins")

    @property
    def input_channels(self):
        return FEATURE_SUBSETS[self.feature_subset]

    @property
    def pooled_bins(self):
        f = self.n_bins
        for p in self.freq_pool:
            f //= p
        return f

    @property
    def temporal_width(self):
        if self.num_recurrent_layers:
            return 2 * self.recurrent_width
        return self.conv_filters[-1] * self.pooled_bins

    def scaled(self, factor):
        """Same architecture with every filter/unit count multiplied by ``factor``."""
        s = lambda v: max(1, int(round(v * factor)))
        return replace(self, conv_filters=tuple(map(s, self.conv_filters)),
                       attention_filters=tuple(map(s, self.attention_filters)),
                       recurrent_width=s(self.recurrent_width), head_width=s(self.head_width))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _bn(cfg, n):
    return nn.BatchNorm2d(n, eps=cfg.bn_eps, momentum=cfg.bn_momentum)


class Attention(nn.Module):
    """Sigmoid time-frequency map multiplied into the input."""

    def __init__(self, cfg):
        super().__init__()
        c = cfg.input_channels
        f1, f2 = cfg.attention_filters
        self.mode = cfg.attention_mode
        out = c if self.mode == "all_channels" else 1
        self.body = nn.Sequential(
            nn.Conv2d(c, f1, 3, padding=1), _bn(cfg, f1), nn.ELU(cfg.elu_alpha),
            nn.Conv2d(f1, f2, 3, padding=1), _bn(cfg, f2), nn.ELU(cfg.elu_alpha),
            nn.Conv2d(f2, out, 1))

    def forward(self, x):
        """x: B x C x T x F -> (weighted x, map)."""
        m = torch.sigmoid(self.body(x))
        if self.mode == "all_channels":
            return x * m, m
        # magnitude is channel 0; phase channels pass through
        return torch.cat([x[:, :1] * m, x[:, 1:]], dim=1), m


class ConvBlock(nn.Module):
    def __init__(self, cfg, c_in, c_out, pool):
        super().__init__()
        k = KERNELS[cfg.kernel_shape]
        self.conv = nn.Conv2d(c_in, c_out, k, padding=(k[0] // 2, k[1] // 2))
        self.bn = _bn(cfg, c_out)
        self.maxpool = nn.MaxPool2d((1, pool))
        self.avgpool = nn.AvgPool2d((1, pool))
        self.act = nn.ELU(cfg.elu_alpha)

    def forward(self, x):
        x = self.bn(self.conv(x))
        return self.act(self.maxpool(x) + self.avgpool(x))


class DistanceCRNN(nn.Module):
    """Attention -> conv stack -> bi-GRU -> linear heads.

    ``forward`` returns ``(utterance, framewise, attention_map)`` with shapes
    ``(B,)``, ``(B, T)`` and ``(B, T, F, C_map)`` (map is None without
    attention).
    """

    def __init__(self, cfg=None, seed=0):
        super().__init__()
        cfg = cfg or ModelConfig()
        self.cfg = cfg
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.attention = Attention(cfg) if cfg.attention_mode != "none" else None
            chans = (cfg.input_channels,) + cfg.conv_filters
            self.convs = nn.ModuleList(ConvBlock(cfg, a, b, p)
                                       for a, b, p in zip(chans, chans[1:], cfg.freq_pool))
            flat = cfg.conv_filters[-1] * cfg.pooled_bins
            self.rnn = (nn.GRU(flat, cfg.recurrent_width, num_layers=cfg.num_recurrent_layers,
                               batch_first=True, bidirectional=True)
                        if cfg.num_recurrent_layers else None)
            self.fc_frame = nn.Linear(cfg.temporal_width, cfg.head_width)
            self.fc_out = nn.Linear(cfg.head_width, 1)
            self.fc_utt = nn.Linear(cfg.n_frames, 1)

    def attend(self, x):
        """x: B x T x F x C -> (weighted x, map or None), same layout."""
        if self.attention is None:
            return x, None
        y, m = self.attention(x.permute(0, 3, 1, 2))
        return y.permute(0, 2, 3, 1), m.permute(0, 2, 3, 1)

    def conv_stack(self, x):
        """B x T x F x C -> B x T x F' x P."""
        h = x.permute(0, 3, 1, 2)
        for block in self.convs:
            h = block(h)
        return h.permute(0, 2, 3, 1)

    def temporal(self, h):
        """B x T x F' x P -> B x T x D (flattened; recurrent layers if any)."""
        b, t = h.shape[:2]
        # flatten channel-major, frequency-minor
        z = h.permute(0, 1, 3, 2).reshape(b, t, -1)
        if self.rnn is not None:
            z, _ = self.rnn(z)
        return z

    def heads(self, z):
        yt = self.fc_out(self.fc_frame(z)).squeeze(-1)
        return self.fc_utt(yt).squeeze(-1), yt

    def forward(self, x):
        c = self.cfg
        if x.dim() != 4 or x.shape[2] != c.n_bins or x.shape[3] != c.input_channels:
            raise ValueError(f"expected B x T x {c.n_bins} x {c.input_channels}, got {tuple(x.shape)}")
        if x.shape[1] != c.n_frames:
            raise ValueError(f"model built for T={c.n_frames} frames, got {x.shape[1]}")
        xa, m = self.attend(x)
        y, yt = self.heads(self.temporal(self.conv_stack(xa)))
        return y, yt, m

    def parameter_breakdown(self):
        count = lambda mod: sum(p.numel() for p in mod.parameters()) if mod is not None else 0
        parts = {"attention": count(self.attention), "conv": count(self.convs),
                 "recurrent": count(self.rnn),
                 "heads": count(self.fc_frame) + count(self.fc_out) + count(self.fc_utt)}
        parts["total"] = sum(parts.values())
        return parts


def count_parameters(cfg):
    return DistanceCRNN(cfg).parameter_breakdown()["total"]


def save_checkpoint(path, model, extraction_hash=None, training_state=None):
    """Weights, batch-norm statistics, config and training state in one file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = {"format": "speakerdist-checkpoint-1", "model_config": model.cfg.to_dict(),
            "state_dict": model.state_dict(), "extraction_hash": extraction_hash,
            "training_state": training_state or {}}
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(blob, tmp)
    tmp.replace(path)
    return path


def load_checkpoint(path):
    """Returns ``(model in eval mode, checkpoint dict)``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint {path} not found")
    blob = torch.load(path, map_location="cpu", weights_only=False)
    if blob.get("format") != "speakerdist-checkpoint-1":
        raise ValueError(f"{path} is not a speakerdist checkpoint")
    model = DistanceCRNN(ModelConfig.from_dict(blob["model_config"]))
    model.load_state_dict(blob["state_dict"])
    if any(p.dtype == torch.float64 for p in blob["state_dict"].values()):
        model.double()
    return model.eval(), blob
