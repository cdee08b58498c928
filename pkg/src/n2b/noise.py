"""Synthetic degradation processes and the noise-transplantation step.

Every generator returns the noisy image together with the clean one and the
exact residual (residual == noisy - clean in float32), so diagnostics can see
the true noise while training never does. Outputs are deliberately unclamped:
clipping would break the additive decomposition the training scheme relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image import Image
from .tensor import Tensor, ShapeError

LOG_EPSILON = 1e-3


@dataclass(frozen=True)
class NoiseSpec:
    """A degradation process: kind plus a fixed level or [lo, hi] range.

    Levels follow each model's convention: Gaussian sigma on the 0-255 scale,
    speckle variance, salt & pepper / text probability.
    """

    kind: str                 # gaussian | speckle | salt_pepper | text
    level: float | tuple[float, float]
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("gaussian", "speckle", "salt_pepper", "text"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        lo, hi = self.bounds()
        if lo < 0 or lo > hi:
            raise ValueError(f"bad noise level {self.level!r}")
        if self.kind in ("salt_pepper", "text") and hi > 1:
            raise ValueError(f"probability level must be <= 1, got {hi}")

    def bounds(self) -> tuple[float, float]:
        if isinstance(self.level, (tuple, list)):
            lo, hi = self.level
            return float(lo), float(hi)
        return float(self.level), float(self.level)

    def draw_level(self, rng: np.random.Generator) -> float:
        """A fresh level per image when the spec is a range."""
        lo, hi = self.bounds()
        return lo if lo == hi else float(rng.uniform(lo, hi))

    def apply(self, clean: Image, rng: np.random.Generator) -> "DegradedSample":
        level = self.draw_level(rng)
        if self.kind == "gaussian":
            return add_gaussian(clean, level, rng)
        if self.kind == "speckle":
            return add_speckle(clean, level, rng)
        if self.kind == "salt_pepper":
            return add_salt_pepper(clean, level, rng)
        return add_text(clean, level, rng)


@dataclass(frozen=True)
class DegradedSample:
    """true_noise == noisy - clean exactly; true_noise is diagnostics-only."""

    noisy: Image
    clean: Image
    true_noise: Image


def _sample(clean: Image, noisy_px: np.ndarray) -> DegradedSample:
    noisy_px = noisy_px.astype(np.float32)
    return DegradedSample(
        noisy=Image(noisy_px),
        clean=clean,
        true_noise=Image(noisy_px - clean.pixels),
    )


def add_gaussian(clean: Image, sigma_255: float, rng: np.random.Generator) -> DegradedSample:
    if sigma_255 < 0:
        raise ValueError("sigma must be non-negative")
    n = rng.normal(0.0, sigma_255 / 255.0, size=clean.pixels.shape)
    return _sample(clean, clean.pixels + n)


def add_speckle(clean: Image, v: float, rng: np.random.Generator) -> DegradedSample:
    """Multiplicative noise: noisy = clean + n * clean, n ~ U(-sqrt(3v), sqrt(3v))."""
    if v < 0:
        raise ValueError("variance must be non-negative")
    a = np.sqrt(3.0 * v)
    n = rng.uniform(-a, a, size=clean.pixels.shape)
    return _sample(clean, clean.pixels * (1.0 + n))


def add_salt_pepper(clean: Image, p: float, rng: np.random.Generator) -> DegradedSample:
    """Replace each pixel with 0 or 1 (fair coin) with probability p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("probability must be in [0, 1]")
    hit = rng.random(clean.pixels.shape) < p
    salt = rng.random(clean.pixels.shape) < 0.5
    noisy = np.where(hit, np.where(salt, 1.0, 0.0), clean.pixels)
    return _sample(clean, noisy)


def log_domain(img: Image) -> Image:
    """ln(x + eps); turns multiplicative degradation into additive."""
    return Image(np.log(img.pixels.astype(np.float64) + LOG_EPSILON).astype(np.float32))


def exp_domain(img: Image) -> Image:
    """Inverse of log_domain to within float rounding."""
    return Image((np.exp(img.pixels.astype(np.float64)) - LOG_EPSILON).astype(np.float32))


def stabilized_sum(c: np.ndarray, n: np.ndarray) -> np.ndarray:
    """c + n, nudged to a float32 fixed point so d - c recomputes exactly.

    A plain float32 sum d = fl(c + n) does not guarantee fl(d - c) == fl(d - c)
    round-trips through another addition; iterating d -> c + (d - c) reaches a
    pair where d == c + (d - c) bit-exactly, at most one ulp from the plain sum.
    """
    d = c + n
    for _ in range(8):
        d2 = c + (d - c)
        if np.array_equal(d2, d):
            break
        d = d2
    return d


def transplant(c: Image, n_tilde: Tensor) -> Tensor:
    """Add an extracted noise map onto a clean image: d = c + n_tilde.

    The caller must pass a detached map; the result is never clamped and the
    transplanted noise is exactly recoverable as d - c.
    """
    if n_tilde._parents or n_tilde.requires_grad:
        raise ValueError("transplant expects a detached noise map")
    c_chw = np.ascontiguousarray(c.pixels.transpose(2, 0, 1)[None])
    if c_chw.shape != n_tilde.shape:
        raise ShapeError(f"transplant: clean {c_chw.shape} vs noise {n_tilde.shape}")
    return Tensor(stabilized_sum(c_chw, n_tilde.data))


# -- text overlay ------------------------------------------------------

# 5x7 bitmap glyphs, one string per row, '#' = inked
_FONT = {
    "A": (" ### ", "#   #", "#   #", "#####", "#   #", "#   #", "#   #"),
    "B": ("#### ", "#   #", "#### ", "#   #", "#   #", "#   #", "#### "),
    "C": (" ####", "#    ", "#    ", "#    ", "#    ", "#    ", " ####"),
    "D": ("#### ", "#   #", "#   #", "#   #", "#   #", "#   #", "#### "),
    "E": ("#####", "#    ", "#### ", "#    ", "#    ", "#    ", "#####"),
    "F": ("#####", "#    ", "#### ", "#    ", "#    ", "#    ", "#    "),
    "G": (" ####", "#    ", "#    ", "#  ##", "#   #", "#   #", " ####"),
    "H": ("#   #", "#   #", "#####", "#   #", "#   #", "#   #", "#   #"),
    "I": ("#####", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", "#####"),
    "J": ("    #", "    #", "    #", "    #", "#   #", "#   #", " ### "),
    "K": ("#   #", "#  # ", "# #  ", "##   ", "# #  ", "#  # ", "#   #"),
    "L": ("#    ", "#    ", "#    ", "#    ", "#    ", "#    ", "#####"),
    "M": ("#   #", "## ##", "# # #", "# # #", "#   #", "#   #", "#   #"),
    "N": ("#   #", "##  #", "# # #", "#  ##", "#   #", "#   #", "#   #"),
    "O": (" ### ", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "),
    "P": ("#### ", "#   #", "#   #", "#### ", "#    ", "#    ", "#    "),
    "Q": (" ### ", "#   #", "#   #", "#   #", "# # #", "#  # ", " ## #"),
    "R": ("#### ", "#   #", "#   #", "#### ", "# #  ", "#  # ", "#   #"),
    "S": (" ####", "#    ", " ### ", "    #", "    #", "    #", "#### "),
    "T": ("#####", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  "),
    "U": ("#   #", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "),
    "V": ("#   #", "#   #", "#   #", "#   #", "#   #", " # # ", "  #  "),
    "W": ("#   #", "#   #", "#   #", "# # #", "# # #", "## ##", "#   #"),
    "X": ("#   #", "#   #", " # # ", "  #  ", " # # ", "#   #", "#   #"),
    "Y": ("#   #", "#   #", " # # ", "  #  ", "  #  ", "  #  ", "  #  "),
    "Z": ("#####", "    #", "   # ", "  #  ", " #   ", "#    ", "#####"),
    "0": (" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "),
    "1": ("  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", "#####"),
    "2": (" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"),
    "3": (" ### ", "#   #", "    #", "  ## ", "    #", "#   #", " ### "),
    "4": ("   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "),
    "5": ("#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "),
    "6": (" ### ", "#    ", "#    ", "#### ", "#   #", "#   #", " ### "),
    "7": ("#####", "    #", "   # ", "  #  ", " #   ", " #   ", " #   "),
    "8": (" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "),
    "9": (" ### ", "#   #", "#   #", " ####", "    #", "    #", " ### "),
}
_GLYPHS = {ch: np.array([[c == "#" for c in row] for row in rows], dtype=bool)
           for ch, rows in _FONT.items()}
_CHARSET = sorted(_GLYPHS)


def _string_mask(text: str, scale: int) -> np.ndarray:
    cols = []
    gap = np.zeros((7, 1), dtype=bool)
    for i, ch in enumerate(text):
        if i:
            cols.append(gap)
        cols.append(_GLYPHS[ch])
    mask = np.concatenate(cols, axis=1)
    return mask.repeat(scale, axis=0).repeat(scale, axis=1)


def add_text(clean: Image, p: float, rng: np.random.Generator) -> DegradedSample:
    """Stamp opaque random strings until roughly a fraction p of pixels is hit.

    Strings use a built-in 5x7 font at integer scales 1-4, each with one
    uniform random intensity; coverage lands within p +/- 0.02.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("probability must be in [0, 1]")
    h, w, c = clean.pixels.shape
    noisy = clean.pixels.copy()
    covered = np.zeros((h, w), dtype=bool)
    target = int(round(p * h * w))
    tolerance = max(1, int(0.015 * h * w))
    guard = 0
    while covered.sum() < target - tolerance and guard < 10000:
        guard += 1
        remaining = target - int(covered.sum())
        # shrink strings as the budget runs out so we never overshoot
        scale = int(rng.integers(1, 5))
        length = int(rng.integers(2, 9))
        while length > 1 and length * 35 * scale * scale > remaining:
            length -= 1
        while scale > 1 and length * 35 * scale * scale > remaining:
            scale -= 1
        text = "".join(_CHARSET[int(i)] for i in rng.integers(0, len(_CHARSET), length))
        mask = _string_mask(text, scale)
        mh, mw = mask.shape
        if mh > h or mw > w:
            continue
        top = int(rng.integers(h - mh + 1))
        left = int(rng.integers(w - mw + 1))
        intensity = np.float32(rng.random())
        region = noisy[top:top + mh, left:left + mw]
        region[mask] = intensity
        covered[top:top + mh, left:left + mw] |= mask
    return _sample(clean, noisy)
