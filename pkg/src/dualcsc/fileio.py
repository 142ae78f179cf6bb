"""Tensor files, trace CSVs, image loading and dictionary mosaics.

Tensor file layout (all integers little-endian)::

    bytes 0-3    magic b"CSCT"
    bytes 4-7    u32 version (1)
    byte  8      u8 ndim
    then         ndim x u64 dims
    then         float64 payload, row-major

Dictionaries are stored as (K, J, *support) and sparse maps as (K, *dims).
"""

from __future__ import annotations

import csv
import math
import os
import struct

import numpy as np
from PIL import Image

from .exceptions import DimensionError

MAGIC = b"CSCT"
VERSION = 1
TRACE_HEADER = ("outer_iter", "phase", "objective", "data_term", "l1_term",
                "admm_iters", "cg_iters", "elapsed_ms")
IMAGE_SUFFIXES = (".png", ".pgm")
# ITU-R BT.601 luma weights, the same ones PIL uses for "L" conversion
LUMA = np.array([0.299, 0.587, 0.114])


class TensorFormatError(ValueError):
    pass


def encode_tensor(arr):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    if arr.ndim > 255:
        raise TensorFormatError("too many axes: %d" % arr.ndim)
    header = MAGIC + struct.pack("<IB", VERSION, arr.ndim)
    header += struct.pack("<%dQ" % arr.ndim, *arr.shape)
    return header + arr.tobytes(order="C")


def decode_tensor(data):
    data = bytes(data)
    if len(data) < 9 or data[:4] != MAGIC:
        raise TensorFormatError("not a CSCT tensor file")
    version, ndim = struct.unpack_from("<IB", data, 4)
    if version != VERSION:
        raise TensorFormatError("unsupported CSCT version %d" % version)
    offset = 9 + 8 * ndim
    if len(data) < offset:
        raise TensorFormatError("truncated header")
    dims = struct.unpack_from("<%dQ" % ndim, data, 9)
    expected = 8 * math.prod(dims)
    if len(data) - offset != expected:
        raise TensorFormatError("payload has %d bytes, header implies %d"
                                % (len(data) - offset, expected))
    arr = np.frombuffer(data, dtype="<f8", offset=offset).reshape(dims)
    return arr.astype(np.float64)


def write_tensor(path, arr):
    with open(path, "wb") as fh:
        fh.write(encode_tensor(arr))


def read_tensor(path):
    with open(path, "rb") as fh:
        return decode_tensor(fh.read())


def write_trace(path, trace):
    """Write a ConvergenceTrace as CSV, one row per half-step."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for rec in trace:
            obj = rec.objective
            writer.writerow([rec.outer_iter, rec.phase, repr(obj.total), repr(obj.data_term),
                             repr(obj.l1_term), rec.admm_iters, rec.cg_iters,
                             "%.3f" % rec.elapsed_ms])


def read_trace(path):
    """Rows of a trace CSV as dicts with numeric fields converted."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_HEADER:
            raise TensorFormatError("unexpected trace header %s" % reader.fieldnames)
        rows = []
        for row in reader:
            for key in ("outer_iter", "admm_iters", "cg_iters"):
                row[key] = int(row[key])
            for key in ("objective", "data_term", "l1_term", "elapsed_ms"):
                row[key] = float(row[key])
            rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# images


def list_images(directory):
    names = sorted(f for f in os.listdir(directory)
                   if f.lower().endswith(IMAGE_SUFFIXES))
    return [os.path.join(directory, f) for f in names]


def load_image(path, color=False):
    """Read a PNG/PGM file as float64.

    Returns (H, W) in gray mode and (3, H, W) with ``color=True``; gray
    images are replicated over the three channels in that case.
    """
    with Image.open(path) as img:
        img.load()
        if img.mode in ("P", "PA", "LA", "RGBA", "CMYK", "YCbCr", "1"):
            img = img.convert("RGB")
        arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3:
        rgb = arr[..., :3]
        if color:
            return np.ascontiguousarray(np.moveaxis(rgb, -1, 0))
        return rgb @ LUMA
    if color:
        return np.repeat(arr[np.newaxis], 3, axis=0)
    return arr


def load_image_dir(directory, color=False):
    """All images of a directory as (names, array of shape (N, J, H, W))."""
    paths = list_images(directory)
    if not paths:
        raise FileNotFoundError("no .png or .pgm images in %s" % directory)
    images = [load_image(p, color) for p in paths]
    shapes = {a.shape for a in images}
    if len(shapes) > 1:
        raise DimensionError("images differ in size: %s" % sorted(shapes))
    arr = np.stack(images)
    if not color:
        arr = arr[:, np.newaxis]
    names = [os.path.splitext(os.path.basename(p))[0] for p in paths]
    return names, arr


def to_uint8(arr):
    """Min-max scale to 0..255; a constant array maps to 0."""
    arr = np.asarray(arr, dtype=float)
    lo, hi = float(arr.min()), float(arr.max())
    if hi - lo <= 0:
        return np.zeros(arr.shape, dtype=np.uint8)
    return np.round(255.0 * (arr - lo) / (hi - lo)).astype(np.uint8)


def save_image(path, arr):
    """Save (H, W) as gray or (3, H, W) as RGB after min-max scaling."""
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 3 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim == 3:
        Image.fromarray(np.moveaxis(to_uint8(arr), 0, -1)).save(path)
    else:
        Image.fromarray(to_uint8(arr)).save(path)


def mosaic(filters):
    """Tile filters of shape (K, J, m1, m2) into one uint8 image.

    Filters sit on a ceil(sqrt(K)) x ceil(sqrt(K)) grid separated (and
    framed) by 1-pixel black lines, so each side measures g*(m+1)+1. Each
    filter is min-max scaled on its own. J = 3 gives an RGB mosaic of shape
    (H, W, 3); any other channel count is averaged to gray. Three-axis
    filters are shown by their middle slice along the first grid axis.
    """
    filters = np.asarray(filters, dtype=float)
    if filters.ndim == 5:
        filters = filters[:, :, filters.shape[2] // 2]
    if filters.ndim == 3:
        filters = filters[:, :, np.newaxis, :]
    if filters.ndim != 4:
        raise DimensionError("mosaic needs (K, J, m1, m2) filters, got %s" % (filters.shape,))
    n_filters, channels, m1, m2 = filters.shape
    rgb = channels == 3
    if not rgb:
        filters = filters.mean(axis=1, keepdims=True)
    g = math.ceil(math.sqrt(n_filters))
    shape = (g * (m1 + 1) + 1, g * (m2 + 1) + 1)
    out = np.zeros(shape + ((3,) if rgb else ()), dtype=np.uint8)
    for k in range(n_filters):
        r, c = divmod(k, g)
        tile = to_uint8(filters[k])
        tile = np.moveaxis(tile, 0, -1) if rgb else tile[0]
        top, left = 1 + r * (m1 + 1), 1 + c * (m2 + 1)
        out[top:top + m1, left:left + m2] = tile
    return out


def save_mosaic(path, filters):
    Image.fromarray(mosaic(filters)).save(path)
