"""Gradient images and their on-disk formats (PFM, CSV)."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict

import numpy as np


class ImageError(ValueError):
    pass


@dataclass
class GradientImage:
    """One real channel per derivative target, stored as ``(height, width)``."""

    width: int
    height: int
    channels: Dict[str, np.ndarray] = field(default_factory=dict)
    rays_per_sample: float = 0.0

    def __post_init__(self):
        for name, ch in self.channels.items():
            if ch.shape != (self.height, self.width):
                raise ImageError(f"channel {name} has shape {ch.shape}, "
                                 f"expected {(self.height, self.width)}")

    @property
    def data(self) -> np.ndarray:
        """The first channel (single-target renders have exactly one)."""
        return next(iter(self.channels.values()))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(c)) for c in self.channels.values())


def write_pfm(img, path) -> None:
    """Little-endian PFM; 2-D arrays are written as grayscale ``Pf``, ``(h, w, 3)`` as ``PF``.

    Rows are stored bottom-to-top, as the format requires.
    """
    a = np.asarray(img.data if isinstance(img, GradientImage) else img, dtype=np.float64)
    if a.ndim == 2:
        tag = b"Pf"
    elif a.ndim == 3 and a.shape[2] == 3:
        tag = b"PF"
    else:
        raise ImageError(f"cannot write an array of shape {a.shape} as PFM")
    if not np.all(np.isfinite(a)):
        raise ImageError("refusing to write non-finite pixels")
    h, w = a.shape[:2]
    with open(path, "wb") as fh:
        fh.write(tag + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n")
        fh.write(np.ascontiguousarray(a[::-1], dtype="<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        tag = fh.readline().strip()
        if tag not in (b"Pf", b"PF"):
            raise ImageError(f"{path}: not a PFM file")
        w, h = (int(x) for x in fh.readline().split())
        scale = float(fh.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        nc = 1 if tag == b"Pf" else 3
        raw = np.frombuffer(fh.read(), dtype=dtype, count=w * h * nc)
    shape = (h, w) if nc == 1 else (h, w, 3)
    return raw.reshape(shape)[::-1].astype(np.float64)


def write_image_csv(img, path) -> None:
    """Long-format dump: ``x, y, value`` per pixel."""
    a = np.asarray(img.data if isinstance(img, GradientImage) else img, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ImageError("refusing to write non-finite pixels")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "y", "value"])
        for y in range(a.shape[0]):
            for x in range(a.shape[1]):
                wr.writerow([x, y, repr(float(a[y, x]))])


def write_image(img, path) -> None:
    """Write by extension: ``.pfm`` or ``.csv``."""
    suffix = Path(path).suffix.lower()
    if suffix == ".pfm":
        write_pfm(img, path)
    elif suffix == ".csv":
        write_image_csv(img, path)
    else:
        raise ImageError(f"unsupported image extension {suffix!r}")
