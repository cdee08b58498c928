"""Image representation, PNG/PGM/PPM I/O, patch sampling, tensor conversion.

Pixels are stored as float32 intensities nominally in [0, 1]. Arithmetic never
clamps implicitly; only :func:`clamp_01` and :func:`save_image` clip, so
additive decompositions like x = y + n stay exact.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensor import Tensor


class ImageError(Exception):
    """Base class for image I/O failures."""


class UnsupportedImageError(ImageError):
    """File is recognized but uses an unsupported variant (bit depth, color type)."""


class MalformedImageError(ImageError):
    """File is corrupt, truncated, or not a known format."""


@dataclass(frozen=True)
class Image:
    """A dense (H, W, C) float32 pixel grid, C in {1, 3}."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"Image needs (H, W, 1|3) pixels, got shape {px.shape}")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def channels(self):
        return self.pixels.shape[2]

    def allclose(self, other: "Image", tol: float = 0.0) -> bool:
        return self.pixels.shape == other.pixels.shape and \
            bool(np.allclose(self.pixels, other.pixels, rtol=0, atol=tol))


def clamp_01(img: Image) -> Image:
    return Image(np.clip(img.pixels, 0.0, 1.0))


def image_to_tensor(img: Image) -> Tensor:
    """(H, W, C) image -> (1, C, H, W) tensor, lossless."""
    return Tensor(np.ascontiguousarray(img.pixels.transpose(2, 0, 1)[None]))


def tensor_to_image(t: Tensor) -> Image:
    data = t.data if isinstance(t, Tensor) else np.asarray(t)
    if data.ndim != 4 or data.shape[0] != 1:
        raise ValueError(f"tensor_to_image needs shape (1, C, H, W), got {data.shape}")
    if data.shape[1] not in (1, 3):
        raise ValueError(f"unsupported channel count {data.shape[1]}")
    return Image(np.ascontiguousarray(data[0].transpose(1, 2, 0)).astype(np.float32))


def quantize(img: Image) -> np.ndarray:
    """Clamp to [0,1] and map to uint8 by round(v*255)."""
    return np.clip(np.rint(np.clip(img.pixels, 0.0, 1.0) * 255.0), 0, 255).astype(np.uint8)


# -- PNG ---------------------------------------------------------------

_PNG_SIG = b"\x89PNG\r\n\x1a\n"


def _png_chunk(tag: bytes, payload: bytes) -> bytes:
    return (struct.pack(">I", len(payload)) + tag + payload
            + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF))


def _encode_png(u8: np.ndarray) -> bytes:
    h, w, c = u8.shape
    color_type = 0 if c == 1 else 2
    ihdr = struct.pack(">IIBBBBB", w, h, 8, color_type, 0, 0, 0)
    raw = bytearray()
    for row in u8.reshape(h, w * c):
        raw.append(0)  # filter type None
        raw.extend(row.tobytes())
    return (_PNG_SIG + _png_chunk(b"IHDR", ihdr)
            + _png_chunk(b"IDAT", zlib.compress(bytes(raw), 6))
            + _png_chunk(b"IEND", b""))


def _paeth(a, b, c):
    p = a.astype(np.int16) + b - c
    pa, pb, pc = np.abs(p - a), np.abs(p - b), np.abs(p - c)
    out = np.where((pa <= pb) & (pa <= pc), a, np.where(pb <= pc, b, c))
    return out.astype(np.uint8)


def _unfilter(raw: bytes, h: int, w: int, bpp: int) -> np.ndarray:
    stride = w * bpp
    if len(raw) < h * (stride + 1):
        raise MalformedImageError("PNG pixel data truncated")
    out = np.zeros((h, stride), dtype=np.uint8)
    pos = 0
    prev = np.zeros(stride, dtype=np.uint8)
    for y in range(h):
        ftype = raw[pos]
        row = np.frombuffer(raw, dtype=np.uint8, count=stride, offset=pos + 1).copy()
        pos += stride + 1
        if ftype == 0:
            pass
        elif ftype == 1:  # Sub
            for i in range(bpp, stride):
                row[i] = (int(row[i]) + int(row[i - bpp])) & 0xFF
        elif ftype == 2:  # Up
            row = (row.astype(np.int16) + prev).astype(np.uint8)
        elif ftype == 3:  # Average
            for i in range(stride):
                left = int(row[i - bpp]) if i >= bpp else 0
                row[i] = (int(row[i]) + (left + int(prev[i])) // 2) & 0xFF
        elif ftype == 4:  # Paeth
            for i in range(stride):
                a = int(row[i - bpp]) if i >= bpp else 0
                c = int(prev[i - bpp]) if i >= bpp else 0
                b = int(prev[i])
                row[i] = (int(row[i]) + int(_paeth(np.uint8(a), np.uint8(b), np.uint8(c)))) & 0xFF
        else:
            raise MalformedImageError(f"PNG row uses unknown filter type {ftype}")
        out[y] = row
        prev = row
    return out


def _decode_png(data: bytes) -> np.ndarray:
    if not data.startswith(_PNG_SIG):
        raise MalformedImageError("bad PNG signature")
    pos = len(_PNG_SIG)
    ihdr = None
    idat = bytearray()
    seen_iend = False
    while pos + 8 <= len(data):
        length, tag = struct.unpack(">I4s", data[pos:pos + 8])
        chunk_end = pos + 8 + length + 4
        if chunk_end > len(data):
            raise MalformedImageError("PNG chunk extends past end of file")
        payload = data[pos + 8:pos + 8 + length]
        if tag == b"IHDR":
            ihdr = payload
        elif tag == b"IDAT":
            idat.extend(payload)
        elif tag == b"IEND":
            seen_iend = True
            break
        pos = chunk_end
    if ihdr is None or not seen_iend:
        raise MalformedImageError("PNG missing IHDR or IEND chunk")
    w, h, depth, color_type, comp, filt, interlace = struct.unpack(">IIBBBBB", ihdr)
    if depth != 8:
        raise UnsupportedImageError(f"only 8-bit PNGs supported, got depth {depth}")
    if color_type not in (0, 2):
        raise UnsupportedImageError(f"only gray/RGB PNGs supported, got color type {color_type}")
    if comp != 0 or filt != 0 or interlace != 0:
        raise UnsupportedImageError("unsupported PNG compression/filter/interlace method")
    c = 1 if color_type == 0 else 3
    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as e:
        raise MalformedImageError(f"PNG deflate stream corrupt: {e}") from e
    return _unfilter(raw, h, w, c).reshape(h, w, c)


# -- PGM / PPM ---------------------------------------------------------

def _encode_pnm(u8: np.ndarray) -> bytes:
    h, w, c = u8.shape
    magic = b"P5" if c == 1 else b"P6"
    return magic + f"\n{w} {h}\n255\n".encode() + u8.tobytes()


def _decode_pnm(data: bytes) -> np.ndarray:
    if data[:2] not in (b"P5", b"P6"):
        raise MalformedImageError("bad PGM/PPM magic")
    c = 1 if data[:2] == b"P5" else 3
    # header: magic, width, height, maxval as whitespace-separated tokens,
    # '#' comments allowed
    tokens = []
    pos = 2
    while len(tokens) < 3:
        if pos >= len(data):
            raise MalformedImageError("PGM/PPM header truncated")
        ch = data[pos:pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos:pos + 1].isspace():
                pos += 1
            tokens.append(data[start:pos])
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError as e:
        raise MalformedImageError(f"non-numeric PGM/PPM header token: {e}") from e
    if maxval != 255:
        raise UnsupportedImageError(f"only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    need = w * h * c
    body = data[pos:pos + need]
    if len(body) < need:
        raise MalformedImageError("PGM/PPM pixel data truncated")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, c).copy()


# -- public I/O --------------------------------------------------------

def load_image(path) -> Image:
    """Load an 8-bit PNG, PGM (P5) or PPM (P6) file as a [0,1] float image."""
    data = Path(path).read_bytes()
    if data.startswith(_PNG_SIG):
        u8 = _decode_png(data)
    elif data[:2] in (b"P5", b"P6"):
        u8 = _decode_pnm(data)
    else:
        raise MalformedImageError(f"{path}: not a PNG, PGM or PPM file")
    return Image(u8.astype(np.float32) / 255.0)


def save_image(img: Image, path) -> None:
    """Clamp, quantize by round(v*255) and write; format chosen by suffix."""
    path = Path(path)
    u8 = quantize(img)
    suffix = path.suffix.lower()
    if suffix == ".png":
        path.write_bytes(_encode_png(u8))
    elif suffix in (".pgm", ".ppm"):
        if suffix == ".pgm" and u8.shape[2] != 1:
            raise ValueError("PGM holds grayscale only; use .ppm for RGB")
        if suffix == ".ppm" and u8.shape[2] != 3:
            raise ValueError("PPM holds RGB only; use .pgm for grayscale")
        path.write_bytes(_encode_pnm(u8))
    else:
        raise ValueError(f"unsupported image suffix {suffix!r} (use .png/.pgm/.ppm)")


# -- patch sampling ----------------------------------------------------

class PatchSampler:
    """Uniform random fully-inside patches from a set of images, seeded."""

    def __init__(self, images, patch_size: int, seed: int):
        if not images:
            raise ValueError("PatchSampler needs at least one source image")
        for im in images:
            if patch_size > im.height or patch_size > im.width:
                raise ValueError(
                    f"patch size {patch_size} exceeds image {im.width}x{im.height}")
        self.images = list(images)
        self.patch_size = patch_size
        self.rng = np.random.default_rng(seed)

    def sample_corner(self, image_index=None):
        """Pick (index, top, left); exposed so aligned image sets can share corners."""
        if image_index is None:
            image_index = int(self.rng.integers(len(self.images)))
        im = self.images[image_index]
        top = int(self.rng.integers(im.height - self.patch_size + 1))
        left = int(self.rng.integers(im.width - self.patch_size + 1))
        return image_index, top, left

    def extract(self, image_index: int, top: int, left: int) -> Image:
        k = self.patch_size
        return Image(self.images[image_index].pixels[top:top + k, left:left + k])

    def sample_patch(self, image_index=None) -> Image:
        return self.extract(*self.sample_corner(image_index))
