"""4D light field container, EPI slicing and EPI patch extraction.

Samples are stored in a single array indexed ``(v, u, y, x, c)`` so that a
horizontal EPI ``L(u, v0, x, y_i)`` is the strided view ``data[v0, :, y_i]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ArgumentError, BorderError, ShapeError, ViewRangeError

HORIZONTAL = "horizontal"
VERTICAL = "vertical"
BORDER_POLICIES = ("replicate", "reject")


class LightField4D:
    """Light field samples ``L(u, v, x, y, c)`` with intensities in [0, 1].

    Parameters
    ----------
    data : array_like
        Array of shape ``(V, U, Y, X, C)`` (a 4-D array is promoted to one
        channel).
    check : bool
        Validate finiteness and the [0, 1] range.
    """

    def __init__(self, data, check=True):
        data = np.asarray(data)
        if data.ndim == 4:
            data = data[..., None]
        if data.ndim != 5:
            raise ShapeError(f"expected (V, U, Y, X, C) samples, got shape {data.shape}")
        if not np.issubdtype(data.dtype, np.floating):
            raise ArgumentError("light field samples must be real-valued")
        V, U, Y, X, C = data.shape
        if min(V, U, Y, X) < 1 or C not in (1, 3):
            raise ShapeError(f"invalid light field extents {data.shape}")
        if check:
            if not np.all(np.isfinite(data)):
                raise ArgumentError("light field contains non-finite samples")
            if data.min() < 0.0 or data.max() > 1.0:
                raise ArgumentError("light field intensities must lie in [0, 1]")
        self.data = data

    @classmethod
    def from_uint8(cls, views):
        """Build from 8-bit samples, normalized by 255 in single precision."""
        views = np.asarray(views)
        if views.dtype != np.uint8:
            raise ArgumentError("expected uint8 samples")
        return cls(views.astype(np.float32) / np.float32(255.0), check=False)

    def to_uint8(self):
        return np.clip(np.rint(self.data * 255.0), 0, 255).astype(np.uint8)

    def quantized(self):
        """Round-trip through 8-bit storage (what a written dataset reloads to)."""
        return LightField4D.from_uint8(self.to_uint8())

    @property
    def shape(self):
        return self.data.shape

    @property
    def U(self):
        return self.data.shape[1]

    @property
    def V(self):
        return self.data.shape[0]

    @property
    def X(self):
        return self.data.shape[3]

    @property
    def Y(self):
        return self.data.shape[2]

    @property
    def C(self):
        return self.data.shape[4]

    @property
    def u0(self):
        return (self.U - 1) // 2

    @property
    def v0(self):
        return (self.V - 1) // 2

    def center_view(self):
        return subaperture(self, self.u0, self.v0)

    def transpose(self):
        """Swap the roles of (u, x) and (v, y)."""
        return LightField4D(np.ascontiguousarray(self.data.transpose(1, 0, 3, 2, 4)), check=False)

    def __eq__(self, other):
        if not isinstance(other, LightField4D):
            return NotImplemented
        return self.data.shape == other.data.shape and np.array_equal(self.data, other.data)

    def __repr__(self):
        V, U, Y, X, C = self.shape
        return f"LightField4D(U={U}, V={V}, X={X}, Y={Y}, C={C}, dtype={self.data.dtype})"


@dataclass
class EPI:
    """Angular x spatial slice, ``data`` of shape ``(A, S, C)``.

    ``fixed`` holds the fixed coordinates: ``(v0, y_i)`` for a horizontal
    EPI, ``(u0, x_i)`` for a vertical one.
    """

    data: np.ndarray
    orientation: str = HORIZONTAL
    fixed: tuple = (0, 0)

    @property
    def A(self):
        return self.data.shape[0]

    @property
    def S(self):
        return self.data.shape[1]

    @property
    def C(self):
        return self.data.shape[2]

    @property
    def center_row(self):
        return (self.A - 1) // 2


@dataclass
class EPIPatch:
    """An ``H x W x C`` window of an EPI centered on ``center`` = (x_i, y_i)."""

    data: np.ndarray
    center: tuple = (0, 0)
    gt_disparity: Optional[float] = None
    orientation: str = HORIZONTAL
    replicated: bool = False

    @property
    def H(self):
        return self.data.shape[0]

    @property
    def W(self):
        return self.data.shape[1]

    @property
    def C(self):
        return self.data.shape[2]


@dataclass
class DisparityMap:
    """Per-pixel disparity (pixels per view step), ``values`` indexed ``[y, x]``.

    ``mask`` marks the evaluation region. ``label`` names how the mask was
    derived (``interior``, ``benchmark`` or ``all``) so reports can state it.
    """

    values: np.ndarray
    mask: np.ndarray = None
    label: str = "all"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise ShapeError(f"disparity map must be 2-D, got {self.values.shape}")
        if self.mask is None:
            self.mask = np.ones(self.values.shape, dtype=bool)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.values.shape:
            raise ShapeError("mask shape differs from disparity shape")
        if not np.all(np.isfinite(self.values[self.mask])):
            raise ArgumentError("disparity values must be finite on the mask")

    @property
    def shape(self):
        return self.values.shape


def _require_odd_angular(n, name):
    if n % 2 == 0:
        raise ArgumentError(f"{name} = {n} is even; EPI slicing needs a center view")


def subaperture(lf, u, v):
    """Return the ``(Y, X, C)`` image seen from view ``(u, v)``."""
    if not (0 <= u < lf.U and 0 <= v < lf.V):
        raise ViewRangeError(f"view ({u}, {v}) outside {lf.U}x{lf.V} grid")
    return lf.data[v, u]


def horizontal_epi(lf, y_i):
    """``L(u, v0, x, y_i)`` as an EPI of ``U`` rows and ``X`` columns."""
    _require_odd_angular(lf.V, "V")
    if not 0 <= y_i < lf.Y:
        raise ViewRangeError(f"row {y_i} outside [0, {lf.Y})")
    return EPI(lf.data[lf.v0, :, y_i], HORIZONTAL, (lf.v0, y_i))


def vertical_epi(lf, x_i):
    """``L(u0, v, x_i, y)`` as an EPI of ``V`` rows and ``Y`` columns."""
    _require_odd_angular(lf.U, "U")
    if not 0 <= x_i < lf.X:
        raise ViewRangeError(f"column {x_i} outside [0, {lf.X})")
    return EPI(lf.data[:, lf.u0, :, x_i], VERTICAL, (lf.u0, x_i))


def extract_patch(epi, center_s, W=29, border="replicate", gt=None, center=None):
    """Cut an ``A x W`` window whose middle column is ``center_s``.

    With ``border="replicate"`` columns outside ``[0, S)`` repeat the edge
    column; with ``"reject"`` such a window raises :class:`BorderError`.
    ``center`` is the (x_i, y_i) pixel recorded on the patch; it defaults to
    the pixel implied by the EPI's fixed coordinate.
    """
    if W < 1 or W % 2 == 0:
        raise ArgumentError(f"patch width must be odd, got {W}")
    if border not in BORDER_POLICIES:
        raise ArgumentError(f"unknown border policy {border!r}")
    if not 0 <= center_s < epi.S:
        raise ViewRangeError(f"center {center_s} outside [0, {epi.S})")
    half = (W - 1) // 2
    lo, hi = center_s - half, center_s + half + 1
    replicated = lo < 0 or hi > epi.S
    if replicated and border == "reject":
        raise BorderError(f"window [{lo}, {hi}) exceeds EPI width {epi.S}")
    if replicated:
        cols = np.clip(np.arange(lo, hi), 0, epi.S - 1)
        data = epi.data[:, cols]
    else:
        data = epi.data[:, lo:hi].copy()
    if center is None:
        fixed = epi.fixed[1]
        center = (center_s, fixed) if epi.orientation == HORIZONTAL else (fixed, center_s)
    return EPIPatch(data, center, gt, epi.orientation, replicated)


def interior_mask(shape, W=29):
    """Pixels of a ``(Y, X)`` image whose full ``W``-wide windows fit on both axes."""
    half = (W - 1) // 2
    mask = np.zeros(shape, dtype=bool)
    Y, X = shape
    if Y > 2 * half and X > 2 * half:
        mask[half:Y - half, half:X - half] = True
    return mask


def patch_pair(lf, x_i, y_i, W=29, border="replicate", gt=None):
    """Horizontal and vertical patches centered on center-view pixel (x_i, y_i)."""
    h = extract_patch(horizontal_epi(lf, y_i), x_i, W, border, gt, (x_i, y_i))
    v = extract_patch(vertical_epi(lf, x_i), y_i, W, border, gt, (x_i, y_i))
    return h, v


def all_patch_pairs_row(lf, y_i, W=29):
    """Patch pairs for every pixel of row ``y_i`` with edge replication.

    Returns two arrays of shape ``(X, A, W, C)``; entry ``x`` equals
    ``patch_pair(lf, x, y_i, W)``.
    """
    half = (W - 1) // 2
    X, Y = lf.X, lf.Y
    cols = np.clip(np.arange(X)[:, None] + np.arange(-half, half + 1)[None, :], 0, X - 1)
    h_epi = lf.data[lf.v0, :, y_i]  # (U, X, C)
    h = h_epi[:, cols].transpose(1, 0, 2, 3)
    rows = np.clip(y_i + np.arange(-half, half + 1), 0, Y - 1)
    v = lf.data[:, lf.u0][:, rows]  # (V, W, X, C)
    v = v.transpose(2, 0, 1, 3)
    return h, v
