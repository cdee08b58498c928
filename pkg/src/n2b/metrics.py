"""PSNR and single-scale SSIM on [0,1] images, plus corpus aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .image import Image

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def _check_pair(test: Image, ref: Image):
    if test.pixels.shape != ref.pixels.shape:
        raise ValueError(
            f"image shapes differ: {test.pixels.shape} vs {ref.pixels.shape}")


def psnr(test: Image, ref: Image) -> float:
    """10*log10(1/MSE); returns math.inf for identical images."""
    _check_pair(test, ref)
    mse = float(np.mean((test.pixels.astype(np.float64) - ref.pixels.astype(np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _ssim_window() -> np.ndarray:
    ax = np.arange(SSIM_WINDOW, dtype=np.float64) - SSIM_WINDOW // 2
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * SSIM_SIGMA ** 2))
    return g / g.sum()


def ssim(test: Image, ref: Image) -> float:
    """Mean single-scale SSIM over valid 11x11 Gaussian windows, channels averaged."""
    _check_pair(test, ref)
    if min(test.height, test.width) < SSIM_WINDOW:
        raise ValueError(
            f"image {test.width}x{test.height} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    win = _ssim_window()
    values = []
    for ch in range(test.channels):
        a = test.pixels[:, :, ch].astype(np.float64)
        b = ref.pixels[:, :, ch].astype(np.float64)

        def filt(x):
            v = sliding_window_view(x, (SSIM_WINDOW, SSIM_WINDOW))
            return np.einsum("hwij,ij->hw", v, win)

        mu_a, mu_b = filt(a), filt(b)
        var_a = filt(a * a) - mu_a ** 2
        var_b = filt(b * b) - mu_b ** 2
        cov = filt(a * b) - mu_a * mu_b
        smap = ((2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)) / \
               ((mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (var_a + var_b + SSIM_C2))
        values.append(float(smap.mean()))
    return float(np.mean(values))


@dataclass(frozen=True)
class QualityReport:
    """Per-image scores plus their arithmetic corpus means."""

    names: tuple[str, ...]
    psnr_db: tuple[float, ...]
    ssim: tuple[float, ...]

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr_db))

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim))

    def to_csv(self) -> str:
        lines = ["filename,psnr_db,ssim"]
        for name, p, s in zip(self.names, self.psnr_db, self.ssim):
            lines.append(f"{name},{_fmt(p)},{s:.6f}")
        lines.append(f"mean,{_fmt(self.mean_psnr)},{self.mean_ssim:.6f}")
        return "\n".join(lines) + "\n"


def _fmt(p: float) -> str:
    return "inf" if math.isinf(p) else f"{p:.4f}"


def evaluate_pairs(pairs, names=None) -> QualityReport:
    """Score (test, ref) image pairs; names default to their indices."""
    pairs = list(pairs)
    if names is None:
        names = [str(i) for i in range(len(pairs))]
    return QualityReport(
        names=tuple(names),
        psnr_db=tuple(psnr(t, r) for t, r in pairs),
        ssim=tuple(ssim(t, r) for t, r in pairs),
    )
