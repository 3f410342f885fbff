"""Per-view disparity shifts, EPI / light-field refocusing and refocus augmentation."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ArgumentError
from .lightfield import EPI, EPIPatch, LightField4D

INTERPOLATIONS = ("nearest", "linear")

# 7 shifts plus the original sample gives the x8 set.
DEFAULT_SHIFTS = (-1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0)


@dataclass(frozen=True)
class RefocusParams:
    """Shift disparity ``s`` in pixels per view step.

    Use :meth:`from_geometry` to derive ``s = f * baseline / Z``.
    """

    s: float

    def __post_init__(self):
        if not math.isfinite(self.s):
            raise ArgumentError("shift must be finite")

    @classmethod
    def from_geometry(cls, focal, baseline, depth):
        if not depth > 0:
            raise ArgumentError("depth must be positive")
        return cls(focal * baseline / depth)


def view_shift(u, u0, s):
    """Pixel shift applied to view ``u`` when refocusing with disparity ``s``."""
    return (u0 - u) * s


def adjust_gt(gt, s):
    """Ground truth disparity after refocusing by ``s``."""
    return gt - s


def resample_axis(arr, offsets, axis, interp="linear"):
    """Sample ``arr`` along ``axis`` at positions ``index + offsets``.

    ``offsets`` broadcasts against ``arr`` (size 1 along ``axis``).
    Positions outside the axis are clamped to the edge sample.
    """
    if interp not in INTERPOLATIONS:
        raise ArgumentError(f"unknown interpolation {interp!r}")
    n = arr.shape[axis]
    shape = [1] * arr.ndim
    shape[axis] = n
    pos = np.arange(n, dtype=np.float64).reshape(shape) + offsets
    pos = np.clip(pos, 0.0, n - 1)
    if interp == "nearest":
        idx = np.rint(pos).astype(np.intp)
        return np.take_along_axis(arr, np.broadcast_to(idx, _bshape(arr, idx, axis)), axis)
    i0 = np.floor(pos)
    frac = (pos - i0).astype(arr.dtype)
    i0 = i0.astype(np.intp)
    i1 = np.minimum(i0 + 1, n - 1)
    full = _bshape(arr, pos, axis)
    a = np.take_along_axis(arr, np.broadcast_to(i0, full), axis)
    b = np.take_along_axis(arr, np.broadcast_to(i1, full), axis)
    return a * (1 - frac) + b * frac


def _bshape(arr, idx, axis):
    shape = list(np.broadcast_shapes(arr.shape, idx.shape))
    shape[axis] = idx.shape[axis]
    return tuple(shape)


def _row_offsets(A, s, ndim, axis):
    a0 = (A - 1) // 2
    shape = [1] * ndim
    shape[axis] = A
    return view_shift(np.arange(A, dtype=np.float64), a0, s).reshape(shape)


def refocus_epi(epi, s, interp="linear"):
    """Shear an EPI so lines of disparity ``s`` become vertical.

    Output row ``u`` is input row ``u`` resampled at ``x + (u0 - u) * s``.
    Accepts an :class:`EPI`, an :class:`EPIPatch` or a raw ``(A, S, C)`` array
    and returns the same kind.
    """
    if not math.isfinite(s):
        raise ArgumentError("shift must be finite")
    data = epi.data if isinstance(epi, (EPI, EPIPatch)) else np.asarray(epi)
    out = resample_axis(data, _row_offsets(data.shape[0], s, data.ndim, 0), 1, interp)
    if isinstance(epi, (EPI, EPIPatch)):
        return replace(epi, data=out)
    return out


def refocus_lightfield(lf, s, interp="linear"):
    """Refocus every view: x shifted by ``(u0 - u) s`` and y by ``(v0 - v) s``."""
    if not math.isfinite(s):
        raise ArgumentError("shift must be finite")
    data = lf.data
    data = resample_axis(data, _row_offsets(lf.U, s, 5, 1), 3, interp)
    data = resample_axis(data, _row_offsets(lf.V, s, 5, 0), 2, interp)
    return LightField4D(data, check=False)


def max_representable_disparity(A, W, safety=0.9):
    """Largest |disparity| whose line stays inside a ``A x W`` patch, times ``safety``."""
    return safety * (W - 1) / (2.0 * (A - 1))


@dataclass
class AugmentedSample:
    """A horizontal/vertical patch pair refocused by ``shift``; ``gt`` is already adjusted."""

    horizontal: EPIPatch
    vertical: EPIPatch
    gt: float
    shift: float = 0.0


def augment(samples, shifts=DEFAULT_SHIFTS, interp="linear", max_abs_gt=None):
    """Expand each sample into the original plus one refocused copy per shift.

    Without ``max_abs_gt`` the output has ``len(samples) * (len(shifts) + 1)``
    entries, ordered sample-major. With it, refocused copies whose adjusted
    |gt| exceeds the limit are dropped (originals are always kept).
    """
    shifts = [float(s) for s in shifts]
    if len(set(shifts)) != len(shifts):
        raise ArgumentError("duplicate shift values")
    if any(s == 0.0 for s in shifts):
        raise ArgumentError("shift 0 is implicit; the original sample is always kept")
    out = []
    for sample in samples:
        out.append(sample)
        for s in shifts:
            gt = adjust_gt(sample.gt, s)
            if max_abs_gt is not None and abs(gt) > max_abs_gt:
                continue
            h = refocus_epi(sample.horizontal, s, interp)
            v = refocus_epi(sample.vertical, s, interp)
            h.gt_disparity = v.gt_disparity = gt
            out.append(AugmentedSample(h, v, gt, sample.shift + s))
    return out


def augment_arrays(h, v, gt, shifts=DEFAULT_SHIFTS, interp="linear", max_abs_gt=None):
    """Batched :func:`augment` on ``(N, A, W, C)`` patch arrays.

    Returns ``(h, v, gt, shift)`` with originals first, then one block per
    shift in the order given.
    """
    shifts = [float(s) for s in shifts]
    if len(set(shifts)) != len(shifts):
        raise ArgumentError("duplicate shift values")
    if any(s == 0.0 for s in shifts):
        raise ArgumentError("shift 0 is implicit; the original sample is always kept")
    hs, vs, gts, ss = [h], [v], [gt], [np.zeros_like(gt)]
    A = h.shape[1]
    for s in shifts:
        new_gt = adjust_gt(gt, s)
        keep = slice(None) if max_abs_gt is None else np.abs(new_gt) <= max_abs_gt
        offsets = _row_offsets(A, s, 4, 1)
        hs.append(resample_axis(h[keep], offsets, 2, interp))
        vs.append(resample_axis(v[keep], offsets, 2, interp))
        gts.append(new_gt[keep])
        ss.append(np.full(gts[-1].shape, s, dtype=gt.dtype))
    return (np.concatenate(hs), np.concatenate(vs), np.concatenate(gts), np.concatenate(ss))
