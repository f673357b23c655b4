"""Difference-hash (DHash) computation and cross-corpus de-duplication.

The 64-bit hash encodes the signs of horizontal brightness gradients of a
9x8 bilinear downsample: bit (r, c) is 1 iff pixel (r, c) is strictly
darker than pixel (r, c+1), packed row-major MSB-first.  The comparison
direction and the resize filter are part of this bit-exact contract
(bilinear sampling at pixel centers with edge clamping, implemented here
rather than delegated, so hashes never depend on an image library's
resampler).

De-duplication removes every candidate whose hash exactly equals some
reference hash; a Hamming-distance near-duplicate mode exists behind
``max_hamming`` and is off by default.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._util import atomic_write_text

HASH_WIDTH = 9
HASH_HEIGHT = 8


def _to_luma(image):
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        return arr
    if arr.ndim == 3 and arr.shape[2] == 3:
        return 0.299 * arr[:, :, 0] + 0.587 * arr[:, :, 1] + 0.114 * arr[:, :, 2]
    raise ValueError(f"expected HxW grayscale or HxWx3 RGB raster, got shape {arr.shape}")


def _bilinear_resize(image, out_h, out_w):
    """Sample at output pixel centers, clamping coordinates at the edges."""
    h, w = image.shape
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = image[np.ix_(y0, x0)] * (1.0 - fx) + image[np.ix_(y0, x1)] * fx
    bottom = image[np.ix_(y1, x0)] * (1.0 - fx) + image[np.ix_(y1, x1)] * fx
    return top * (1.0 - fy) + bottom * fy


def dhash(image) -> int:
    """64-bit difference hash of a grayscale or RGB raster."""
    luma = _to_luma(image)
    if luma.shape[0] < 1 or luma.shape[1] < 1:
        raise ValueError("empty raster")
    small = _bilinear_resize(luma, HASH_HEIGHT, HASH_WIDTH)
    bits = small[:, :-1] < small[:, 1:]
    value = 0
    for bit in bits.reshape(-1):
        value = (value << 1) | int(bit)
    return value


def dhash_hex(image) -> str:
    """Hash as 16 lowercase hex digits (the dump-file form)."""
    return f"{dhash(image):016x}"


def hash_file(path) -> int:
    """Hash an image file (any format Pillow reads; alpha is dropped)."""
    from PIL import Image

    with Image.open(path) as img:
        mode = "L" if img.mode in ("1", "L", "I", "I;16", "F") else "RGB"
        return dhash(np.asarray(img.convert(mode)))


@dataclass
class DedupResult:
    kept: list = field(default_factory=list)
    removed: list = field(default_factory=list)
    reasons: dict = field(default_factory=dict)


def read_manifest(path):
    """Parse an ``id,path`` CSV (header optional) into (id, path) pairs."""
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            if row[0] == "id" and len(row) >= 2 and row[1] == "path":
                continue
            if len(row) != 2:
                raise ValueError(f"{path}: manifest rows must be 'id,path'")
            entries.append((row[0], row[1]))
    return entries


def _hamming(a, b):
    return (a ^ b).bit_count()


def dedup(candidates, references, max_hamming=0) -> DedupResult:
    """Drop candidates whose hash collides with any reference image.

    ``candidates`` is a list of (id, path) pairs; ``references`` a list of
    such manifests.  Unreadable images are reported as warnings and never
    cause removal.  With ``max_hamming == 0`` (default) only exact hash
    equality removes; larger values enable near-duplicate removal.
    """
    ref_hashes: dict[int, str] = {}
    for manifest in references:
        for ref_id, path in manifest:
            try:
                value = hash_file(path)
            except Exception as exc:
                warnings.warn(f"unreadable reference image {path}: {exc}", stacklevel=2)
                continue
            ref_hashes.setdefault(value, ref_id)

    result = DedupResult()
    for cand_id, path in candidates:
        try:
            value = hash_file(path)
        except Exception as exc:
            warnings.warn(f"unreadable candidate image {path}: {exc}", stacklevel=2)
            result.kept.append(cand_id)
            continue
        match = None
        if value in ref_hashes:
            match = (ref_hashes[value], 0)
        elif max_hamming > 0:
            for ref_value, ref_id in ref_hashes.items():
                distance = _hamming(value, ref_value)
                if distance <= max_hamming:
                    match = (ref_id, distance)
                    break
        if match is None:
            result.kept.append(cand_id)
        else:
            ref_id, distance = match
            result.removed.append(cand_id)
            result.reasons[cand_id] = (
                f"hash {value:016x} matches reference {ref_id}"
                + (f" (hamming {distance})" if distance else "")
            )
    return result


def write_hash_dump(entries, path):
    """CSV of ``id,hash_hex`` for a manifest; unreadable images are skipped."""
    lines = ["id,hash_hex"]
    for entry_id, image_path in entries:
        try:
            lines.append(f"{entry_id},{hash_file(image_path):016x}")
        except Exception as exc:
            warnings.warn(f"unreadable image {image_path}: {exc}", stacklevel=2)
    atomic_write_text(path, "\n".join(lines) + "\n")
