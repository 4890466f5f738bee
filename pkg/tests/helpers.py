"""Oracles shared by the unit and acceptance suites."""
import numpy as np
import torch

from speakerdist.model import DistanceCRNN, ModelConfig
from speakerdist.training import dual_loss

SHRUNK = dict(conv_filters=(2, 3, 4), recurrent_width=4, head_width=4, attention_filters=(4, 4),
              n_frames=6)


def gradient_check(n_params=25, seed=0, h=1e-6):
    """Relative errors between autograd and central differences of the dual loss.

    Runs in double precision on the shrunk model; returns one error per
    sampled scalar parameter.
    """
    cfg = ModelConfig(**SHRUNK)
    model = DistanceCRNN(cfg, seed=seed).double().eval()
    gen = torch.Generator().manual_seed(seed)
    x = torch.rand(3, cfg.n_frames, cfg.n_bins, 3, generator=gen, dtype=torch.float64)
    y = torch.tensor([1.5, 4.0, 9.0], dtype=torch.float64)

    def loss():
        y_hat, yt_hat, _ = model(x)
        return dual_loss(y_hat, yt_hat, y)

    model.zero_grad()
    loss().backward()
    params = [p for p in model.parameters()]
    sizes = np.array([p.numel() for p in params])
    rng = np.random.default_rng(seed)
    flat = rng.choice(sizes.sum(), n_params, replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    errors = []
    with torch.no_grad():
        for k in flat:
            i = int(np.searchsorted(offsets, k, side="right") - 1)
            p, j = params[i], int(k - offsets[i])
            analytic = p.grad.view(-1)[j].item()
            old = p.view(-1)[j].item()
            p.view(-1)[j] = old + h
            up = loss().item()
            p.view(-1)[j] = old - h
            down = loss().item()
            p.view(-1)[j] = old
            numeric = (up - down) / (2 * h)
            scale = max(abs(analytic), abs(numeric), 1e-7)
            errors.append(abs(analytic - numeric) / scale)
    return np.array(errors)


def shape_grid_outputs(n_frames=8):
    """(config, y shape, yt shape) for every valid grid cell at default widths."""
    from dataclasses import replace

    from speakerdist.evaluation import shape_grid
    out = []
    for cfg in shape_grid(ModelConfig(n_frames=n_frames)):
        model = DistanceCRNN(cfg).eval()
        x = torch.randn(2, n_frames, cfg.n_bins, cfg.input_channels)
        with torch.no_grad():
            y, yt, _ = model(x)
        out.append((cfg, tuple(y.shape), tuple(yt.shape)))
    return out
