"""Saliency-map ingestion and integral-image box queries.

Maps are per-pixel importance grids in [0, 1], consumed as precomputed
inputs (8-bit grayscale PGM, or PNG via Pillow). A summed-area table makes
mean-saliency-under-a-box queries O(1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import LayoutError


@dataclass
class SaliencyMap:
    width: int
    height: int
    values: np.ndarray                 # (height, width) floats in [0, 1]
    integral: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise LayoutError("saliency map must have positive dimensions")
        if self.values.shape != (self.height, self.width):
            raise LayoutError("saliency values shape mismatch")
        table = np.zeros((self.height + 1, self.width + 1))
        np.cumsum(np.cumsum(self.values, axis=0), axis=1, out=table[1:, 1:])
        self.integral = table

    def _pixel_rect(self, left: float, top: float, right: float, bottom: float):
        x0 = int(np.clip(np.floor(left * self.width + 0.5), 0, self.width))
        x1 = int(np.clip(np.floor(right * self.width + 0.5), 0, self.width))
        y0 = int(np.clip(np.floor(top * self.height + 0.5), 0, self.height))
        y1 = int(np.clip(np.floor(bottom * self.height + 0.5), 0, self.height))
        return x0, y0, x1, y1

    def box_sum(self, left: float, top: float, right: float, bottom: float) -> tuple[float, int]:
        """(saliency mass, pixel count) under a normalized-coordinate box."""
        x0, y0, x1, y1 = self._pixel_rect(left, top, right, bottom)
        if x1 <= x0 or y1 <= y0:
            return 0.0, 0
        t = self.integral
        mass = t[y1, x1] - t[y0, x1] - t[y1, x0] + t[y0, x0]
        return float(mass), (x1 - x0) * (y1 - y0)

    def box_mean(self, left: float, top: float, right: float, bottom: float) -> float:
        mass, count = self.box_sum(left, top, right, bottom)
        return mass / count if count else 0.0

    def box_mean_arrays(self, left, top, right, bottom) -> np.ndarray:
        """Vectorized :meth:`box_mean` over arrays of box edges."""
        x0 = np.clip(np.floor(np.asarray(left) * self.width + 0.5), 0, self.width).astype(int)
        x1 = np.clip(np.floor(np.asarray(right) * self.width + 0.5), 0, self.width).astype(int)
        y0 = np.clip(np.floor(np.asarray(top) * self.height + 0.5), 0, self.height).astype(int)
        y1 = np.clip(np.floor(np.asarray(bottom) * self.height + 0.5), 0, self.height).astype(int)
        t = self.integral
        mass = t[y1, x1] - t[y0, x1] - t[y1, x0] + t[y0, x0]
        count = (x1 - x0) * (y1 - y0)
        empty = (x1 <= x0) | (y1 <= y0)
        return np.where(empty, 0.0, mass / np.where(empty, 1, count))

    def box_mask(self, left: float, top: float, right: float, bottom: float) -> np.ndarray:
        """Boolean pixel mask of the box footprint."""
        mask = np.zeros((self.height, self.width), dtype=bool)
        x0, y0, x1, y1 = self._pixel_rect(left, top, right, bottom)
        mask[y0:y1, x0:x1] = True
        return mask


def _parse_pgm(data: bytes) -> SaliencyMap:
    # token scanner that skips whitespace and '#' comments
    pos = 0

    def token() -> bytes:
        nonlocal pos
        while pos < len(data):
            c = data[pos : pos + 1]
            if c == b"#":
                nl = data.find(b"\n", pos)
                pos = len(data) if nl < 0 else nl + 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise LayoutError("truncated PGM header")
        return data[start:pos]

    magic = token()
    if magic != b"P5":
        raise LayoutError(f"unsupported PGM magic {magic!r} (want P5)")
    try:
        width, height, maxval = int(token()), int(token()), int(token())
    except ValueError as exc:
        raise LayoutError("malformed PGM header") from exc
    if width <= 0 or height <= 0:
        raise LayoutError("PGM dimensions must be positive")
    if not (0 < maxval <= 255):
        raise LayoutError("only 8-bit PGM supported")
    pos += 1  # single whitespace after maxval
    raster = data[pos : pos + width * height]
    if len(raster) < width * height:
        raise LayoutError("truncated PGM raster")
    values = np.frombuffer(raster, dtype=np.uint8).astype(float).reshape(height, width)
    return SaliencyMap(width, height, values / 255.0)


def _parse_png(path: Path) -> SaliencyMap:
    from PIL import Image

    with Image.open(path) as img:
        gray = img.convert("L")
        values = np.asarray(gray, dtype=float) / 255.0
    height, width = values.shape
    return SaliencyMap(width, height, values)


def load_saliency(path: str | Path) -> SaliencyMap:
    """Load a saliency map from an 8-bit PGM (P5) or PNG file."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".png":
        try:
            return _parse_png(path)
        except LayoutError:
            raise
        except Exception as exc:
            raise LayoutError(f"cannot read PNG saliency map: {exc}") from exc
    data = path.read_bytes()
    return _parse_pgm(data)


def write_pgm(path: str | Path, values: np.ndarray) -> None:
    """Write a float grid in [0, 1] as an 8-bit P5 PGM (test/demo helper)."""
    height, width = values.shape
    raster = np.clip(np.rint(values * 255), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{width} {height}\n255\n".encode())
        f.write(raster.tobytes())
