"""Image file output: 8-bit portable graymap/pixmap plus a lossless raw sidecar.

The 8-bit files are for looking at; the raw sidecar (`RAWF64` header line,
then little-endian float64, [channel][row][col]) carries the exact synthesized
values so downstream metrics never lose precision.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

RAW_MAGIC = "RAWF64"


def to_display(img: np.ndarray, gain: float, offset: float = 128.0) -> np.ndarray:
    """Map a float image [C,H,W] to uint8 via gain, mean shift and clipping."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3:
        raise ValueError(f"expected [C,H,W], got shape {img.shape}")
    out = np.clip(np.rint(img * gain + offset), 0, 255).astype(np.uint8)
    if out.shape[0] == 1:
        return out[0]
    if out.shape[0] == 3:
        return out.transpose(1, 2, 0)
    raise ValueError(f"can only display 1- or 3-channel images, got {out.shape[0]}")


def auto_gain(shape, norm_radius: float) -> float:
    """Gain mapping the RMS pixel of a norm-constrained image to ~64 gray levels."""
    n_pixels = int(np.prod(shape))
    return 64.0 * float(np.sqrt(n_pixels)) / norm_radius


def write_image(path, img: np.ndarray, gain: float) -> None:
    """Write a [C,H,W] float image as binary PGM (1 channel) or PPM (3 channels)."""
    data = to_display(img, gain)
    path = Path(path)
    if data.ndim == 2:
        header = f"P5\n{data.shape[1]} {data.shape[0]}\n255\n"
    else:
        header = f"P6\n{data.shape[1]} {data.shape[0]}\n255\n"
    path.write_bytes(header.encode("ascii") + data.tobytes())


def write_raw(path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3:
        raise ValueError(f"expected [C,H,W], got shape {img.shape}")
    c, h, w = img.shape
    header = f"{RAW_MAGIC} {c} {h} {w}\n".encode("ascii")
    Path(path).write_bytes(header + img.astype("<f8").tobytes())


def read_raw(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    newline = blob.index(b"\n")
    fields = blob[:newline].decode("ascii").split()
    if len(fields) != 4 or fields[0] != RAW_MAGIC:
        raise ValueError(f"{path}: not a {RAW_MAGIC} file")
    c, h, w = (int(x) for x in fields[1:])
    data = np.frombuffer(blob, dtype="<f8", offset=newline + 1)
    if data.size != c * h * w:
        raise ValueError(f"{path}: payload has {data.size} values, header says {c * h * w}")
    return data.reshape(c, h, w).copy()
