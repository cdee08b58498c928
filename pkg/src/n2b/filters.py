"""Classical smoothing filters used to manufacture blurred training labels.

All filters use edge-replicate padding so the residual (input minus label)
is not contaminated by dark halos near the borders. Each one preserves
constant images exactly and stays within [min, max] of its input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .image import Image


@dataclass(frozen=True)
class FilterSpec:
    """Which filter produces the blurred labels, and its parameters."""

    kind: str = "bilateral"          # mean | gaussian | median | bilateral
    kernel_size: int = 15
    gaussian_sigma: float = 2.5
    sigma_spatial: float | None = None   # default kernel_size / 6
    sigma_range: float = 0.1

    def __post_init__(self):
        if self.kind not in ("mean", "gaussian", "median", "bilateral"):
            raise ValueError(f"unknown filter kind {self.kind!r}")
        _check_kernel(self.kernel_size)
        if self.kernel_size < 3:
            raise ValueError(f"kernel_size must be >= 3, got {self.kernel_size}")
        if self.gaussian_sigma <= 0 or self.sigma_range <= 0:
            raise ValueError("filter sigmas must be positive")
        if self.sigma_spatial is not None and self.sigma_spatial <= 0:
            raise ValueError("filter sigmas must be positive")

    def apply(self, img: Image) -> Image:
        if self.kind == "mean":
            return mean_filter(img, self.kernel_size)
        if self.kind == "gaussian":
            return gaussian_filter(img, self.kernel_size, self.gaussian_sigma)
        if self.kind == "median":
            return median_filter(img, self.kernel_size)
        sigma_s = self.sigma_spatial if self.sigma_spatial is not None \
            else self.kernel_size / 6.0
        return bilateral_filter(img, self.kernel_size, sigma_s, self.sigma_range)


def _check_kernel(k: int):
    if k % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {k}")


def _pad_replicate(px: np.ndarray, r: int) -> np.ndarray:
    return np.pad(px, ((r, r), (r, r), (0, 0)), mode="edge")


def mean_filter(img: Image, k: int) -> Image:
    _check_kernel(k)
    r = k // 2
    padded = _pad_replicate(img.pixels, r).astype(np.float64)
    # integral image keeps the window sum O(1) per pixel
    ii = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1, padded.shape[2]))
    ii[1:, 1:] = padded.cumsum(axis=0).cumsum(axis=1)
    h, w = img.height, img.width
    sums = ii[k:k + h, k:k + w] - ii[k:k + h, :w] - ii[:h, k:k + w] + ii[:h, :w]
    return Image((sums / (k * k)).astype(np.float32))


def gaussian_kernel(k: int, sigma: float) -> np.ndarray:
    _check_kernel(k)
    ax = np.arange(k, dtype=np.float64) - k // 2
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma * sigma))
    return g / g.sum()


def gaussian_filter(img: Image, k: int, sigma: float) -> Image:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    kern = gaussian_kernel(k, sigma)
    padded = _pad_replicate(img.pixels, k // 2).astype(np.float64)
    win = sliding_window_view(padded, (k, k), axis=(0, 1))  # (H, W, C, k, k)
    out = np.einsum("hwcij,ij->hwc", win, kern)
    return Image(out.astype(np.float32))


def median_filter(img: Image, k: int) -> Image:
    _check_kernel(k)
    r = k // 2
    padded = _pad_replicate(img.pixels, r)
    h, w = img.height, img.width
    out = np.empty_like(img.pixels)
    # row-chunked so the k*k window expansion stays within a memory budget
    chunk = max(1, int(2**26 / (w * k * k * img.channels * 4)))
    for y0 in range(0, h, chunk):
        y1 = min(h, y0 + chunk)
        win = sliding_window_view(padded[y0:y1 + 2 * r], (k, k), axis=(0, 1))
        out[y0:y1] = np.median(win, axis=(3, 4))
    return Image(out)


def bilateral_filter(img: Image, k: int, sigma_spatial: float,
                     sigma_range: float) -> Image:
    _check_kernel(k)
    if sigma_spatial <= 0 or sigma_range <= 0:
        raise ValueError("sigmas must be positive")
    r = k // 2
    px = img.pixels.astype(np.float64)
    padded = _pad_replicate(px, r)
    h, w, c = px.shape
    num = np.zeros_like(px)
    den = np.zeros_like(px)
    inv2ss = 1.0 / (2.0 * sigma_spatial * sigma_spatial)
    inv2sr = 1.0 / (2.0 * sigma_range * sigma_range)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            shifted = padded[r + dy:r + dy + h, r + dx:r + dx + w]
            ws = np.exp(-(dy * dy + dx * dx) * inv2ss)
            wr = np.exp(-((px - shifted) ** 2) * inv2sr)
            num += ws * wr * shifted
            den += ws * wr
    return Image((num / den).astype(np.float32))


def make_blurred_label(x: Image, spec: FilterSpec) -> tuple[Image, Image]:
    """Split a noisy image into a blurred label and its exact residual.

    Returns (label, residual) with ``residual == x - label`` bit-exactly, so
    recomputing the residual from the stored label always reproduces it. The
    label is re-derived from the first residual so the pair is mutually
    stable under float32 subtraction; ``label + residual`` then recovers x up
    to at most the rounding of that one subtraction (it cannot be made exact
    in float32 when a pixel sits far below its blurred value, because the
    cancelling sum is forced onto a coarser grid than x itself).
    """
    label = spec.apply(x).pixels
    residual = x.pixels - label
    for _ in range(4):
        new_label = x.pixels - residual
        new_residual = x.pixels - new_label
        if np.array_equal(new_label, label) and np.array_equal(new_residual, residual):
            break
        label, residual = new_label, new_residual
    return Image(label), Image(residual)
