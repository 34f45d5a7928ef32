"""File output: 8-bit RGB PNG, 16-bit grayscale PNG, little-endian PFM, JSON; all written temp-then-rename."""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import ParseError


def atomic_write(path, write):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_json(path, doc, indent=None):
    text = json.dumps(doc, indent=indent, sort_keys=False) + "\n"
    atomic_write(path, lambda fh: fh.write(text.encode("utf-8")))


def write_rgb_png(path, rgb: np.ndarray):
    img = Image.fromarray(np.ascontiguousarray(rgb, dtype=np.uint8), mode="RGB")
    atomic_write(path, lambda fh: img.save(fh, format="PNG", optimize=False))


def write_mask_png(path, mask: np.ndarray):
    img = Image.fromarray(np.ascontiguousarray(mask, dtype=np.uint16))
    atomic_write(path, lambda fh: img.save(fh, format="PNG"))


def read_png(path) -> np.ndarray:
    with Image.open(path) as img:
        if img.mode in ("I;16", "I;16B", "I"):
            return np.array(img).astype(np.uint16)
        if img.mode != "RGB":
            img = img.convert("RGB")
        return np.array(img)


def write_pfm(path, data: np.ndarray):
    """Single-channel PFM ("Pf"), little-endian (negative scale), rows stored bottom to top."""
    a = np.asarray(data, dtype="<f4")
    if a.ndim != 2:
        raise ValueError("write_pfm expects a 2D array")
    h, w = a.shape

    def write(fh):
        fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.ascontiguousarray(a[::-1]).tobytes())

    atomic_write(path, write)


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = [fh.readline().decode("ascii").strip() for _ in range(3)]
        kind, dims, scale = header
        if kind not in ("Pf", "PF"):
            raise ParseError(f"{path}: not a PFM file")
        w, h = (int(x) for x in dims.split())
        channels = 1 if kind == "Pf" else 3
        dtype = "<f4" if float(scale) < 0 else ">f4"
        data = np.frombuffer(fh.read(), dtype=dtype, count=w * h * channels)
    shape = (h, w) if channels == 1 else (h, w, 3)
    return data.reshape(shape)[::-1].astype(np.float32)
