"""File formats shared across the toolkit.

Raw float maps (depth, warp fields) use a minimal language-neutral layout:
little-endian int32 header ``H, W`` followed by row-major float32 samples,
``H*W`` for single-channel maps and ``H*W*2`` (dx, dy interleaved) for warps.
Images are PNG, 16-bit for float image planes and 8-bit for binary masks.
"""

from __future__ import annotations

import struct
from pathlib import Path

import cv2
import numpy as np

_U16_MAX = 65535


def write_raw_map(path, array: np.ndarray) -> None:
    """Write a (H, W) or (H, W, 2) float array in the raw map format."""
    array = np.asarray(array)
    if array.ndim == 2:
        data = array.astype("<f4")
    elif array.ndim == 3 and array.shape[2] == 2:
        data = array.astype("<f4")
    else:
        raise ValueError(f"raw map must be (H, W) or (H, W, 2), got {array.shape}")
    h, w = array.shape[:2]
    with open(path, "wb") as fh:
        fh.write(struct.pack("<ii", h, w))
        fh.write(data.tobytes(order="C"))


def read_raw_map(path) -> np.ndarray:
    """Read a raw map; returns (H, W) or (H, W, 2) float32 depending on payload size."""
    blob = Path(path).read_bytes()
    if len(blob) < 8:
        raise ValueError(f"{path}: truncated raw map")
    h, w = struct.unpack("<ii", blob[:8])
    if h <= 0 or w <= 0:
        raise ValueError(f"{path}: bad raw map header ({h}, {w})")
    payload = np.frombuffer(blob, dtype="<f4", offset=8)
    if payload.size == h * w:
        return payload.reshape(h, w).copy()
    if payload.size == h * w * 2:
        return payload.reshape(h, w, 2).copy()
    raise ValueError(f"{path}: payload size {payload.size} does not match header ({h}, {w})")


def save_image(path, img: np.ndarray) -> None:
    """Save a float image in [0, 1] (H, W) or (H, W, 3 RGB) as 16-bit PNG."""
    img = np.asarray(img, dtype=np.float64)
    q = np.round(np.clip(img, 0.0, 1.0) * _U16_MAX).astype(np.uint16)
    if q.ndim == 3:
        q = cv2.cvtColor(q, cv2.COLOR_RGB2BGR)
    if not cv2.imwrite(str(path), q):
        raise IOError(f"failed to write image {path}")


def load_image(path) -> np.ndarray:
    """Load a PNG written by :func:`save_image` back to float64 in [0, 1]."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FileNotFoundError(f"cannot read image {path}")
    if raw.ndim == 3:
        raw = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    scale = _U16_MAX if raw.dtype == np.uint16 else 255
    return raw.astype(np.float64) / scale


def save_mask(path, mask: np.ndarray) -> None:
    """Save a {0,1} mask as 8-bit PNG (255 = set)."""
    m = (np.asarray(mask) > 0.5).astype(np.uint8) * 255
    if not cv2.imwrite(str(path), m):
        raise IOError(f"failed to write mask {path}")


def load_mask(path) -> np.ndarray:
    raw = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if raw is None:
        raise FileNotFoundError(f"cannot read mask {path}")
    return (raw > 127).astype(np.float64)


def encode_png_bytes(img: np.ndarray, bitdepth: int = 8) -> bytes:
    """Encode a float image in [0, 1] to PNG bytes (used for wire payloads)."""
    img = np.asarray(img, dtype=np.float64)
    if bitdepth == 8:
        q = np.round(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    else:
        q = np.round(np.clip(img, 0.0, 1.0) * _U16_MAX).astype(np.uint16)
    if q.ndim == 3:
        q = cv2.cvtColor(q, cv2.COLOR_RGB2BGR)
    ok, buf = cv2.imencode(".png", q)
    if not ok:
        raise ValueError("PNG encoding failed")
    return buf.tobytes()


def decode_png_bytes(blob: bytes) -> np.ndarray:
    """Decode PNG bytes to float64 in [0, 1] (RGB for colour images)."""
    raw = cv2.imdecode(np.frombuffer(blob, dtype=np.uint8), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ValueError("undecodable PNG payload")
    if raw.ndim == 3:
        if raw.shape[2] == 4:
            raw = cv2.cvtColor(raw, cv2.COLOR_BGRA2BGR)
        raw = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    scale = _U16_MAX if raw.dtype == np.uint16 else 255
    return raw.astype(np.float64) / scale
