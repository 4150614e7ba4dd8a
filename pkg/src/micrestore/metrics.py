"""PSNR, SSIM and corpus-level before/after reports."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ArgumentError, DataError, DimensionError
from .io.pgm import read_pgm

PSNR_INF = math.inf
WINDOW = 11
WINDOW_SIGMA = 1.5


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def canonical_to_unit(x):
    """Map canonical [-1, 1] values to [0, 1] for scoring with max_val=1."""
    return (np.asarray(x, dtype=np.float64) + 1.0) / 2.0


def psnr(a, b, max_val: float = 1.0) -> float:
    """10*log10(max_val**2 / MSE) in dB; ``math.inf`` when the images are identical."""
    if not max_val > 0:
        raise ArgumentError(f"max_val must be positive, got {max_val}")
    a, b = _pair(a, b)
    err = np.mean((a - b) ** 2)
    if err == 0:
        return PSNR_INF
    return float(10.0 * np.log10(max_val * max_val / err))


def gaussian_window(size: int = WINDOW, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    """Normalized 1-D Gaussian taps; the 2-D window is its outer product."""
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img, g):
    rows = sliding_window_view(img, g.size, axis=0) @ g
    return sliding_window_view(rows, g.size, axis=1) @ g


def ssim_map(a, b, max_val: float = 1.0, size: int = WINDOW, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    a, b = _pair(a, b)
    if a.ndim != 2:
        raise DimensionError(f"ssim expects 2-D images, got shape {a.shape}")
    if a.shape[0] < size or a.shape[1] < size:
        raise DimensionError(f"image {a.shape} smaller than the {size}x{size} SSIM window")
    g = gaussian_window(size, sigma)
    c1 = (0.01 * max_val) ** 2
    c2 = (0.03 * max_val) ** 2
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a * mu_a
    var_b = _filter_valid(b * b, g) - mu_b * mu_b
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2.0 * (mu_a * mu_b) + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, max_val: float = 1.0) -> float:
    """Mean SSIM over valid 11x11 Gaussian (sigma 1.5) windows."""
    if not max_val > 0:
        raise ArgumentError(f"max_val must be positive, got {max_val}")
    return float(np.mean(ssim_map(a, b, max_val)))


# ---------------------------------------------------------------------------
# reports

COLUMNS = ("image_id", "task", "psnr_before", "ssim_before", "psnr_after", "ssim_after")


@dataclass
class MetricRow:
    image_id: str
    task: str
    psnr_before: float
    ssim_before: float
    psnr_after: float | None = None
    ssim_after: float | None = None


def _stats(values):
    vals = np.array([v for v in values if v is not None], dtype=np.float64)
    if vals.size == 0:
        return {"mean": None, "median": None, "std": None}
    with np.errstate(invalid="ignore"):
        return {"mean": float(np.mean(vals)), "median": float(np.median(vals)), "std": float(np.std(vals))}


@dataclass
class MetricReport:
    rows: list = field(default_factory=list)

    def column(self, name):
        return [getattr(r, name) for r in self.rows]

    @property
    def aggregates(self) -> dict:
        return {c: _stats(self.column(c)) for c in COLUMNS[2:]}

    def by_task(self) -> dict:
        out: dict[str, MetricReport] = {}
        for r in self.rows:
            out.setdefault(r.task, MetricReport()).rows.append(r)
        return out


def score_pair(gt, defected, restored=None, max_val: float = 1.0):
    """Before/after PSNR and SSIM for canonical-range images."""
    g = canonical_to_unit(gt)
    d = canonical_to_unit(defected)
    out = [psnr(g, d, max_val), ssim(g, d, max_val)]
    if restored is not None:
        r = canonical_to_unit(restored)
        out += [psnr(g, r, max_val), ssim(g, r, max_val)]
    else:
        out += [None, None]
    return out


def evaluate_corpus(manifest, restored_dir=None, max_val: float = 1.0, include_synthetic: bool = False) -> MetricReport:
    """Score every pair of ``manifest``; restored images are ``<restored_dir>/<defected_id>.pgm``."""
    report = MetricReport()
    pairs = manifest.pairs_for(synthetic=None if include_synthetic else False)
    if not pairs:
        raise DataError("manifest has no pairs to evaluate")
    for pair in pairs:
        gt = read_pgm(manifest.gt[pair.gt].path).data
        defected = read_pgm(manifest.defected[pair.defected].path).data
        restored = None
        if restored_dir is not None:
            path = Path(restored_dir) / f"{pair.defected}.pgm"
            if not path.is_file():
                raise FileNotFoundError(f"restored image for {pair.defected!r} missing at {path}")
            restored = read_pgm(path).data
        report.rows.append(MetricRow(pair.gt, pair.task.label, *score_pair(gt, defected, restored, max_val)))
    return report
