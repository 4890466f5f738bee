"""Absolute and relative distance errors, binned reports with 95 % intervals."""
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..bins import SYNTHETIC_BINS, BinSpec

CI_MODES = ("per_sample", "per_fold")
AVERAGE = "Average"
OTHER = "other"


def l1(y, y_hat):
    """|y - y_hat| (elementwise for arrays)."""
    return np.abs(np.asarray(y, dtype=float) - np.asarray(y_hat, dtype=float))


def rl1(y, y_hat):
    """|y - y_hat| / y; true distances must be positive."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("relative error needs true distances > 0")
    return l1(y, y_hat) / y


@dataclass
class BinRow:
    """One table row; means are None for an empty (absent) bin."""
    label: str
    count: int
    l1: float = None
    l1_ci: float = None
    rl1: float = None
    rl1_ci: float = None
    flags: tuple = ()


@dataclass
class EvalReport:
    rows: list
    ci_mode: str = "per_sample"
    config: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)

    def row(self, label):
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    @property
    def average(self):
        return self.row(AVERAGE)

    @property
    def bin_rows(self):
        return [r for r in self.rows if r.label != AVERAGE]


def _ci_per_sample(x):
    if x.size < 2:
        return 0.0, ("degenerate_ci",)
    return float(1.96 * np.std(x, ddof=1) / math.sqrt(x.size)), ()


def _ci_per_fold(x, folds):
    means = np.array([x[folds == f].mean() for f in np.unique(folds)])
    k = means.size
    if k < 2:
        return 0.0, ("degenerate_ci",)
    return float(stats.t.ppf(0.975, k - 1) * np.std(means, ddof=1) / math.sqrt(k)), ()


def _row(label, y, y_hat, folds, ci_mode):
    if y.size == 0:
        return BinRow(label, 0, flags=("absent",))
    e, r = l1(y, y_hat), rl1(y, y_hat)
    if ci_mode == "per_fold":
        (ce, fl), (cr, _) = _ci_per_fold(e, folds), _ci_per_fold(r, folds)
    else:
        (ce, fl), (cr, _) = _ci_per_sample(e), _ci_per_sample(r)
    return BinRow(label, int(y.size), float(e.mean()), ce, float(r.mean()), cr, fl)


def binned_report(pairs, bins=SYNTHETIC_BINS, ci_mode="per_sample", config=None):
    """Average and per-bin L1 / rL1 with 95 % confidence half-widths.

    ``pairs`` are ``(y, y_hat, metadata)`` tuples; ``per_fold`` intervals
    need ``metadata["fold"]`` and use a t-interval over the fold means,
    ``per_sample`` uses the normal approximation over samples.  Samples
    outside every bin go to an ``other`` row (present only if non-empty).
    """
    if ci_mode not in CI_MODES:
        raise ValueError(f"ci_mode must be one of {CI_MODES}")
    bins = bins if isinstance(bins, BinSpec) else BinSpec(bins)
    pairs = list(pairs)
    y = np.array([p[0] for p in pairs], dtype=float)
    y_hat = np.array([p[1] for p in pairs], dtype=float)
    if ci_mode == "per_fold":
        try:
            folds = np.array([p[2]["fold"] for p in pairs], dtype=int)
        except (KeyError, TypeError, IndexError):
            raise ValueError("per_fold intervals need a 'fold' entry in every pair's metadata") from None
    else:
        folds = np.zeros(y.size, dtype=int)
    idx = bins.assign(y)
    rows = [_row(AVERAGE, y, y_hat, folds, ci_mode)]
    for i, label in enumerate(bins.labels):
        m = idx == i
        rows.append(_row(label, y[m], y_hat[m], folds[m], ci_mode))
    if np.any(idx < 0):
        m = idx < 0
        rows.append(_row(OTHER, y[m], y_hat[m], folds[m], ci_mode))
    cfg = dict(config or {})
    cfg.setdefault("bins", bins.labels)
    # JSON-normalised so rendered reports parse back to an equal object
    return EvalReport(rows, ci_mode, json.loads(json.dumps(cfg, default=str)))


def stratified_curve(x, err, edges=None, width=None):
    """Mean error and count per bin of ``x``: list of (bin centre, mean, count).

    Either explicit ``edges`` or a ``width`` (bins anchored at 0).  Infinite
    ``x`` values form their own point at x=inf.
    """
    x, err = np.asarray(x, dtype=float), np.asarray(err, dtype=float)
    out = []
    fin = np.isfinite(x)
    if width is not None:
        keys = np.floor(x[fin] / width)
        for k in np.unique(keys):
            m = keys == k
            out.append((float((k + 0.5) * width), float(err[fin][m].mean()), int(m.sum())))
    else:
        for a, b in edges:
            m = fin & (x >= a) & (x < b)
            if m.any():
                out.append((float((a + b) / 2), float(err[m].mean()), int(m.sum())))
    for sign in (1, -1):
        m = x == sign * math.inf
        if m.any():
            out.append((sign * math.inf, float(err[m].mean()), int(m.sum())))
    return out


def error_vs_distance(pairs, width=1.0):
    y = [p[0] for p in pairs]
    return stratified_curve(y, l1(y, [p[1] for p in pairs]), width=width)


def drr_stratified_errors(pairs, bin_width_db=2.0):
    """Mean L1 per DRR bin from ``metadata["drr_db"]``; pairs without DRR are ignored."""
    keep = [p for p in pairs if p[2] and p[2].get("drr_db") is not None
            and not (isinstance(p[2]["drr_db"], float) and math.isnan(p[2]["drr_db"]))]
    if not keep:
        raise ValueError("no pair carries a drr_db value")
    drr = [float(p[2]["drr_db"]) for p in keep]
    return stratified_curve(drr, l1([p[0] for p in keep], [p[1] for p in keep]), width=bin_width_db)
