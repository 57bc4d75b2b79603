"""Moment-distance ("FID") scoring of generated windows against real ones.

The score between two 1-D windows is the squared gap of their means plus the
squared gap of their standard deviations. It shares a name with the
inception-embedding Frechet distance used for images but is a much simpler
univariate moment distance; no embedding network is involved.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, VibeGenError


def _as_windows(x) -> np.ndarray:
    """Accept (N, 1, L) or (N, L); return float64 (N, L)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        if x.shape[1] != 1:
            raise DimensionError(f"channel axis: expected 1 channel, got {x.shape[1]}")
        x = x[:, 0, :]
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise DimensionError(f"expected a non-empty stack of windows, got shape {x.shape}")
    return x


def fid_score(x, y, ddof: int = 0) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size == 0 or y.size == 0:
        raise DimensionError("fid_score needs non-empty windows")
    mx, my = x.mean(), y.mean()
    sx, sy = x.std(ddof=ddof), y.std(ddof=ddof)
    return float(abs(mx - my) ** 2 + (sx - sy) ** 2)


def fid_matrix(real, fake, ddof: int = 0) -> np.ndarray:
    """scores[i, j] = fid_score(real[i], fake[j])."""
    r, f = _as_windows(real), _as_windows(fake)
    mr, sr = r.mean(axis=1), r.std(axis=1, ddof=ddof)
    mf, sf = f.mean(axis=1), f.std(axis=1, ddof=ddof)
    return np.abs(mr[:, None] - mf[None, :]) ** 2 + (sr[:, None] - sf[None, :]) ** 2


def pooled_fid(real, fake, ddof: int = 0) -> float:
    """Score between the two sets after flattening each into a single pool."""
    return fid_score(_as_windows(real), _as_windows(fake), ddof)


def histogram_density(scores, bins: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Equal-width bins over [min, max]; returns (edges, density) with sum(density * width) == 1."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if scores.size < 1:
        raise VibeGenError("histogram of an empty score set")
    density, edges = np.histogram(scores, bins=bins, density=True)
    return edges, density


@dataclass(frozen=True)
class BoxStats:
    mean: float
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: int


def box_stats(window) -> BoxStats:
    """Box-plot summary: linearly interpolated quartiles, Tukey 1.5 IQR whiskers."""
    x = np.asarray(window, dtype=np.float64).ravel()
    if x.size == 0:
        raise DimensionError("box_stats of an empty window")
    q1, median, q3 = np.percentile(x, [25, 50, 75])
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = x[(x >= lo_fence) & (x <= hi_fence)]
    return BoxStats(
        mean=float(x.mean()),
        median=float(median),
        q1=float(q1),
        q3=float(q3),
        whisker_low=float(inside.min()),
        whisker_high=float(inside.max()),
        outliers=int(x.size - inside.size),
    )


EXEMPLAR_LABELS = ("low", "median", "high")


def select_exemplars(scores) -> dict[str, tuple[int, int]]:
    """(real, fake) index pairs for the lowest, median-nearest and highest scores.

    Ties on distance to the median go to the larger score; ties on equal scores
    go to the lowest flat index, as do ties for min and max.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2 or s.size == 0:
        raise DimensionError(f"expected a non-empty score matrix, got shape {s.shape}")
    flat = s.ravel()
    dist = np.abs(flat - np.median(flat))
    nearest = np.flatnonzero(dist == dist.min())
    best = flat[nearest].max()
    mid = int(nearest[flat[nearest] == best][0])
    picks = (int(np.argmin(flat)), mid, int(np.argmax(flat)))
    return {label: tuple(int(v) for v in np.unravel_index(k, s.shape)) for label, k in zip(EXEMPLAR_LABELS, picks)}


@dataclass
class FidReport:
    scores: np.ndarray
    edges: np.ndarray
    density: np.ndarray
    exemplars: dict[str, tuple[int, int]]
    box: dict[str, BoxStats] = field(default_factory=dict)  # "low_real", "low_fake", ...

    @property
    def min(self) -> float:
        return float(self.scores.min())

    @property
    def max(self) -> float:
        return float(self.scores.max())

    @property
    def mean(self) -> float:
        return float(self.scores.mean())


def evaluate(real, fake, bins: int = 100, ddof: int = 0) -> FidReport:
    r, f = _as_windows(real), _as_windows(fake)
    scores = fid_matrix(r, f, ddof)
    edges, density = histogram_density(scores, bins)
    exemplars = select_exemplars(scores)
    box = {}
    for label, (i, j) in exemplars.items():
        box[f"{label}_real"] = box_stats(r[i])
        box[f"{label}_fake"] = box_stats(f[j])
    return FidReport(scores, edges, density, exemplars, box)


def _fmt(v) -> str:
    return repr(float(v))


def write_report(report: FidReport, real, fake, out_dir) -> list[Path]:
    """Write fid_scores.csv, fid_hist.csv, exemplars.csv and box_stats.csv into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    r, f = _as_windows(real), _as_windows(fake)
    written = []

    path = out / "fid_scores.csv"
    n, m = report.scores.shape
    ii, jj = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("i,j,score\n")
        fh.writelines(f"{i},{j},{_fmt(s)}\n" for i, j, s in zip(ii.ravel(), jj.ravel(), report.scores.ravel()))
    written.append(path)

    path = out / "fid_hist.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("bin_left,bin_right,density\n")
        for lo, hi, d in zip(report.edges[:-1], report.edges[1:], report.density):
            fh.write(f"{_fmt(lo)},{_fmt(hi)},{_fmt(d)}\n")
    written.append(path)

    # long format: one row per sample of each exemplar pair
    path = out / "exemplars.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("pair,rank,score,real_index,fake_index,sample,real,fake\n")
        for rank, label in enumerate(EXEMPLAR_LABELS):
            i, j = report.exemplars[label]
            score = _fmt(report.scores[i, j])
            for t, (a, b) in enumerate(zip(r[i], f[j])):
                fh.write(f"{label},{rank},{score},{i},{j},{t},{_fmt(a)},{_fmt(b)}\n")
    written.append(path)

    path = out / "box_stats.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("signal,mean,median,q1,q3,whisker_low,whisker_high,outliers\n")
        for label, b in report.box.items():
            fh.write(
                f"{label},{_fmt(b.mean)},{_fmt(b.median)},{_fmt(b.q1)},{_fmt(b.q3)},"
                f"{_fmt(b.whisker_low)},{_fmt(b.whisker_high)},{b.outliers}\n"
            )
    written.append(path)
    return written
