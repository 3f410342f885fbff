"""PFM and PNG files, and the benchmark-style dataset directory.

Dataset layout (defaults follow the common 4D light field benchmark)::

    <dir>/input_Cam000.png ... input_Cam080.png   views, index = v * U + u
    <dir>/parameters.cfg                          INI: extents, focal length, baseline, disparity range
    <dir>/gt_disp_lowres.pfm                      optional ground-truth disparity (1-channel PFM)
"""

from __future__ import annotations

import configparser
import io as _io
import os
import re

import numpy as np
from PIL import Image

from .errors import DatasetError, FormatError
from .lightfield import DisparityMap, LightField4D
from .numerics.checkpoint import atomic_write_bytes

VIEW_PATTERN = "input_Cam{index:03d}.png"
PARAMS_FILE = "parameters.cfg"
GT_FILE = "gt_disp_lowres.pfm"


def encode_pfm(image, scale=-1.0):
    """PFM bytes for a ``(H, W)`` or ``(H, W, 3)`` image.

    A negative ``scale`` writes a little-endian payload, positive big-endian.
    Rows are stored bottom-up.
    """
    image = np.asarray(image)
    if image.ndim == 3 and image.shape[2] == 1:
        image = image[..., 0]
    if image.ndim == 2:
        tag = b"Pf"
    elif image.ndim == 3 and image.shape[2] == 3:
        tag = b"PF"
    else:
        raise FormatError(f"PFM holds 1 or 3 channels, got shape {image.shape}")
    if scale == 0:
        raise FormatError("PFM scale must be non-zero")
    h, w = image.shape[:2]
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    header = tag + b"\n" + f"{w} {h}\n{scale!r}\n".encode("ascii")
    return header + np.ascontiguousarray(image[::-1], dtype=dtype).tobytes()


def write_pfm(image, path, scale=-1.0):
    atomic_write_bytes(path, encode_pfm(image, scale))


def decode_pfm(payload):
    """Parse PFM bytes into a top-down float32 array (``(H, W)`` or ``(H, W, 3)``)."""
    pos = 0
    tokens = []
    while len(tokens) < 4:
        m = re.compile(rb"\s*(\S+)").match(payload, pos)
        if m is None:
            raise FormatError("truncated PFM header", pos)
        tokens.append((m.group(1), m.start(1)))
        pos = m.end()
    if pos >= len(payload) or payload[pos:pos + 1] not in b" \t\r\n":
        raise FormatError("missing whitespace after PFM header", pos)
    pos += 1
    tag, tag_at = tokens[0]
    if tag == b"PF":
        channels = 3
    elif tag == b"Pf":
        channels = 1
    else:
        raise FormatError(f"bad PFM identifier {tag!r}", tag_at)
    try:
        w, h = int(tokens[1][0]), int(tokens[2][0])
    except ValueError:
        raise FormatError("bad PFM dimensions", tokens[1][1]) from None
    if w <= 0 or h <= 0:
        raise FormatError("PFM dimensions must be positive", tokens[1][1])
    try:
        scale = float(tokens[3][0])
    except ValueError:
        raise FormatError("bad PFM scale", tokens[3][1]) from None
    if scale == 0:
        raise FormatError("PFM scale is zero", tokens[3][1])
    n = w * h * channels
    if len(payload) - pos < 4 * n:
        raise FormatError(f"PFM payload truncated: need {4 * n} bytes, have {len(payload) - pos}", pos)
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    data = np.frombuffer(payload, dtype=dtype, count=n, offset=pos).astype(np.float32)
    shape = (h, w) if channels == 1 else (h, w, 3)
    return np.ascontiguousarray(data.reshape(shape)[::-1])


def read_pfm(path):
    with open(path, "rb") as f:
        return decode_pfm(f.read())


def write_png(image, path):
    """Write an 8-bit PNG from a uint8 array or a [0, 1] float array."""
    image = np.asarray(image)
    if image.dtype != np.uint8:
        if image.dtype == bool:
            image = image.astype(np.uint8) * 255
        else:
            image = np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    if image.ndim == 3 and image.shape[2] == 1:
        image = image[..., 0]
    buf = _io.BytesIO()
    Image.fromarray(image).save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def read_png(path):
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        return np.asarray(im)


def write_params(path, params):
    cp = configparser.ConfigParser()
    for section, values in params.items():
        cp[section] = {k: str(v) for k, v in values.items()}
    buf = _io.StringIO()
    cp.write(buf)
    atomic_write_bytes(path, buf.getvalue().encode("utf-8"))


def read_params(path):
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise DatasetError(f"cannot read parameters file {path}")
    return {s: dict(cp[s]) for s in cp.sections()}


def default_params(U, V, X, Y, disp_range, focal_length_mm=100.0, baseline_mm=90.0):
    return {
        "intrinsics": {"width": X, "height": Y, "focal_length_mm": focal_length_mm},
        "extrinsics": {"num_cams_x": U, "num_cams_y": V, "baseline_mm": baseline_mm},
        "meta": {"disp_min": float(disp_range[0]), "disp_max": float(disp_range[1])},
    }


def write_dataset(directory, lf, dmap=None, params=None, pattern=VIEW_PATTERN, meta=None):
    """Write views as 8-bit PNGs, the parameters file, and GT as PFM.

    Returns the light field as it will read back (quantized to 8 bits).
    """
    os.makedirs(directory, exist_ok=True)
    q = lf.to_uint8()
    V, U, Y, X, C = q.shape
    for v in range(V):
        for u in range(U):
            write_png(q[v, u], os.path.join(directory, pattern.format(index=v * U + u)))
    if params is None:
        rng = (float(dmap.values.min()), float(dmap.values.max())) if dmap is not None else (0.0, 0.0)
        params = default_params(U, V, X, Y, rng)
    if meta:
        params = {**params, "meta": {**params.get("meta", {}), **meta}}
    write_params(os.path.join(directory, PARAMS_FILE), params)
    if dmap is not None:
        write_pfm(dmap.values.astype(np.float32), os.path.join(directory, GT_FILE))
    return LightField4D.from_uint8(q)


def load_dataset(directory, pattern=VIEW_PATTERN, params_file=PARAMS_FILE, gt_file=GT_FILE):
    """Load a benchmark-layout directory into ``(LightField4D, DisparityMap or None, params)``."""
    params_path = os.path.join(directory, params_file)
    if not os.path.exists(params_path):
        raise DatasetError(f"missing parameters file {params_path}")
    params = read_params(params_path)
    try:
        U = int(params["extrinsics"]["num_cams_x"])
        V = int(params["extrinsics"]["num_cams_y"])
        X = int(params["intrinsics"]["width"])
        Y = int(params["intrinsics"]["height"])
        dmin = float(params["meta"]["disp_min"])
        dmax = float(params["meta"]["disp_max"])
    except (KeyError, ValueError) as exc:
        raise DatasetError(f"parameters file lacks or mangles {exc}") from None
    if not (np.isfinite(dmin) and np.isfinite(dmax)):
        raise DatasetError("disparity range must be finite")
    views = None
    for v in range(V):
        for u in range(U):
            index = v * U + u
            path = os.path.join(directory, pattern.format(index=index))
            if not os.path.exists(path):
                raise DatasetError(f"missing view {index} (u={u}, v={v}): {path}")
            img = read_png(path)
            if img.ndim == 2:
                img = img[..., None]
            if img.shape[:2] != (Y, X):
                raise DatasetError(f"view {index} is {img.shape[1]}x{img.shape[0]}, expected {X}x{Y}")
            if views is None:
                views = np.empty((V, U, Y, X, img.shape[2]), dtype=np.uint8)
            elif img.shape[2] != views.shape[4]:
                raise DatasetError(f"view {index} has {img.shape[2]} channels, expected {views.shape[4]}")
            views[v, u] = img
    lf = LightField4D.from_uint8(views)
    dmap = None
    gt_path = os.path.join(directory, gt_file)
    if os.path.exists(gt_path):
        gt = read_pfm(gt_path)
        if gt.ndim != 2 or gt.shape != (Y, X):
            raise DatasetError(f"ground truth is {gt.shape}, expected ({Y}, {X})")
        dmap = DisparityMap(gt, label="all", meta={"disp_range": (dmin, dmax)})
    params["disp_range"] = (dmin, dmax)
    return lf, dmap, params
