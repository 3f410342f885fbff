"""Synthetic layered light fields with analytic disparity, and a brute-force slope oracle.

Layers are fronto-parallel planes. A layer with disparity ``d`` shows, in
view ``(u, v)`` at pixel ``(x, y)``, its texture at
``(x - (u0 - u) d, y - (v0 - v) d)``; larger disparity is nearer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ArgumentError
from .lightfield import EPI, EPIPatch, HORIZONTAL, DisparityMap, LightField4D, interior_mask

LUMA = np.array([0.299, 0.587, 0.114])
MIN_CONTRAST = 0.2
# below this center-column luminance slope (per pixel) the oracle's minimum is
# dominated by linear-interpolation bias rather than by the line orientation
MIN_CENTER_GRADIENT = 0.005


class BandLimitedTexture:
    """Smooth random color texture defined on the continuous plane.

    A sum of random-phase plane sinusoids plus lattice value noise (lattice
    values smoothed by a [1, 2, 1] / 4 kernel, reconstructed with a cubic
    B-spline). Output is affine-mapped into [0.05, 0.95].
    """

    def __init__(self, channels=3, seed=0, n_sines=None, max_freq=0.05, min_freq=0.02,
                 noise_cell=10.0, noise_weight=0.35, extent=512):
        rng = np.random.default_rng(seed)
        self.channels = channels
        n = int(rng.integers(3, 9)) if n_sines is None else n_sines
        self.freq = rng.uniform(min_freq, max_freq, n)
        theta = rng.uniform(0, np.pi, n)
        self.dirx, self.diry = np.cos(theta), np.sin(theta)
        self.phase = rng.uniform(0, 2 * np.pi, n)
        # per-channel mixing keeps channels correlated but not identical
        self.amp = rng.uniform(0.3, 1.0, (n, 1)) * rng.uniform(0.6, 1.0, (n, channels))
        self.cell = noise_cell
        self.noise_weight = noise_weight
        m = int(extent / noise_cell) + 8
        lattice = rng.uniform(-1, 1, (m, m, channels))
        k = np.array([0.25, 0.5, 0.25])
        for ax in (0, 1):
            lattice = (np.roll(lattice, 1, ax) * k[0] + lattice * k[1]
                       + np.roll(lattice, -1, ax) * k[2])
        self.lattice = lattice
        self.origin = -4 * noise_cell - 64.0
        scale = self.amp.sum(axis=0) + noise_weight
        self.gain = 0.45 / scale
        self.bias = 0.5

    def _noise(self, x, y):
        m = self.lattice.shape[0]
        gx = (x - self.origin) / self.cell
        gy = (y - self.origin) / self.cell
        ix, iy = np.floor(gx).astype(np.intp), np.floor(gy).astype(np.intp)
        fx, fy = gx - ix, gy - iy
        wx, wy = _bspline_weights(fx), _bspline_weights(fy)
        out = 0.0
        for a in range(4):
            for b in range(4):
                vals = self.lattice[np.mod(iy + a - 1, m), np.mod(ix + b - 1, m)]
                out = out + (wy[a] * wx[b])[..., None] * vals
        return out

    def __call__(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        x, y = np.broadcast_arrays(x, y)
        arg = (2 * np.pi) * (x[..., None] * self.dirx + y[..., None] * self.diry) * self.freq + self.phase
        # explicit reduction: results must not depend on the call's batch shape
        s = (np.sin(arg)[..., None] * self.amp).sum(axis=-2)
        s = s + self.noise_weight * self._noise(x, y)
        return self.bias + self.gain * s


def _bspline_weights(t):
    t2, t3 = t * t, t * t * t
    return (
        (1 - t) ** 3 / 6.0,
        (3 * t3 - 6 * t2 + 4) / 6.0,
        (-3 * t3 + 3 * t2 + 3 * t + 1) / 6.0,
        t3 / 6.0,
    )


class ArrayTexture:
    """Texture backed by samples on the integer grid.

    ``values`` is ``(S, C)`` (varies along x only) or ``(Y, X, C)``.
    Outside the grid, edge samples repeat.
    """

    def __init__(self, values, interp="nearest"):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 2:
            values = values[None]
        self.values = values
        self.channels = values.shape[-1]
        self.interp = interp

    def __call__(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, np.float64), np.asarray(y, np.float64))
        Y, X, _ = self.values.shape
        if self.interp == "nearest":
            ix = np.clip(np.rint(x), 0, X - 1).astype(np.intp)
            iy = np.clip(np.rint(y), 0, Y - 1).astype(np.intp) if Y > 1 else np.zeros_like(ix)
            return self.values[iy, ix]
        x = np.clip(x, 0, X - 1)
        y = np.clip(y, 0, Y - 1)
        x0, y0 = np.floor(x).astype(np.intp), np.floor(y).astype(np.intp)
        x1, y1 = np.minimum(x0 + 1, X - 1), np.minimum(y0 + 1, Y - 1)
        fx, fy = (x - x0)[..., None], (y - y0)[..., None]
        v = self.values
        top = v[y0, x0] * (1 - fx) + v[y0, x1] * fx
        bot = v[y1, x0] * (1 - fx) + v[y1, x1] * fx
        return top * (1 - fy) + bot * fy


def texture_contrast(texture, extent=64, y=0.0):
    """Peak-to-peak luminance of ``texture`` along a row of length ``extent``."""
    xs = np.arange(extent, dtype=np.float64)
    return float(np.ptp(luminance(texture(xs, np.full_like(xs, y)))))


def random_texture(channels, rng, min_contrast=MIN_CONTRAST):
    """Draw :class:`BandLimitedTexture` seeds from ``rng`` until one has enough contrast."""
    while True:
        tex = BandLimitedTexture(channels, int(rng.integers(2**31)))
        if texture_contrast(tex) >= min_contrast:
            return tex


@dataclass
class Rect:
    x0: float
    x1: float
    y0: float
    y1: float

    def contains(self, x, y):
        return (x >= self.x0) & (x < self.x1) & (y >= self.y0) & (y < self.y1)


@dataclass
class Disk:
    cx: float
    cy: float
    r: float

    def contains(self, x, y):
        return (x - self.cx) ** 2 + (y - self.cy) ** 2 < self.r ** 2


@dataclass
class Layer:
    """Fronto-parallel plane; ``region`` None means it covers everything."""

    disparity: float
    texture: object
    region: Optional[object] = None


@dataclass
class SyntheticScene:
    """Layers sorted front-to-back (descending disparity); last one is the background."""

    layers: list
    X: int = 64
    Y: int = 64
    U: int = 9
    V: int = 9
    channels: int = 3
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def validate(self):
        if not self.layers:
            raise ArgumentError("scene has no layers")
        if self.layers[-1].region is not None:
            raise ArgumentError("last layer must be a full background")
        ds = [layer.disparity for layer in self.layers]
        if any(a < b for a, b in zip(ds, ds[1:])):
            raise ArgumentError("layers must be sorted front-to-back (descending disparity)")
        limit = (min(self.X, self.Y) - 1) / max(self.U - 1, self.V - 1, 1)
        if any(abs(d) > limit for d in ds):
            raise ArgumentError(f"layer disparity exceeds representable range {limit}")


def gen_epi(d, texture=None, A=9, S=29, seed=0, row=0.0, channels=3):
    """Render a single-plane EPI; row ``u`` is ``texture(x - (u0 - u) d, row)``.

    Returns ``(EPI, d)``.
    """
    if A > 1 and abs(d) > (S - 1) / (A - 1):
        raise ArgumentError(f"|d| = {abs(d)} exceeds {(S - 1) / (A - 1)} for A={A}, S={S}")
    if texture is None:
        texture = random_texture(channels, np.random.default_rng(seed))
    a0 = (A - 1) // 2
    us = np.arange(A, dtype=np.float64)[:, None]
    xs = np.arange(S, dtype=np.float64)[None, :]
    px = xs - (a0 - us) * d
    py = np.full_like(px, float(row))
    return EPI(texture(px, py), HORIZONTAL, (a0, int(row))), d


def gen_lightfield(scene):
    """Render ``scene`` into a light field plus the center-view disparity map.

    The map's mask is the interior band where a 29-wide patch fits
    (``label="interior"``).
    """
    scene.validate()
    U, V, X, Y, C = scene.U, scene.V, scene.X, scene.Y, scene.channels
    u0, v0 = (U - 1) // 2, (V - 1) // 2
    out = np.empty((V, U, Y, X, C))
    ys = np.arange(Y, dtype=np.float64)[:, None]
    xs = np.arange(X, dtype=np.float64)[None, :]
    for v in range(V):
        for u in range(U):
            img = np.empty((Y, X, C))
            todo = np.ones((Y, X), dtype=bool)
            for layer in scene.layers:
                d = layer.disparity
                px = xs - (u0 - u) * d
                py = ys - (v0 - v) * d
                px, py = np.broadcast_arrays(px, py)
                hit = todo if layer.region is None else todo & layer.region.contains(px, py)
                if hit.any():
                    img[hit] = layer.texture(px[hit], py[hit])
                todo &= ~hit
                if not todo.any():
                    break
            out[v, u] = img
    gt = np.empty((Y, X))
    todo = np.ones((Y, X), dtype=bool)
    yy, xx = np.broadcast_arrays(ys, xs)
    for layer in scene.layers:
        hit = todo if layer.region is None else todo & layer.region.contains(xx, yy)
        gt[hit] = layer.disparity
        todo &= ~hit
    lf = LightField4D(np.clip(out, 0.0, 1.0), check=False)
    dmap = DisparityMap(gt, interior_mask((Y, X)), "interior")
    return lf, dmap


def random_scene(seed, size=64, views=9, channels=3, d_range=(-2.0, 2.0), n_objects=None):
    """Background plus 1-2 rectangles/disks at random disparities in ``d_range``."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 3)) if n_objects is None else n_objects
    ds = np.sort(rng.uniform(*d_range, n + 1))[::-1]
    layers = []
    for i in range(n):
        tex = random_texture(channels, rng)
        c = rng.uniform(0.25 * size, 0.75 * size, 2)
        half = rng.uniform(0.15 * size, 0.35 * size, 2)
        if rng.random() < 0.5:
            region = Rect(c[0] - half[0], c[0] + half[0], c[1] - half[1], c[1] + half[1])
        else:
            region = Disk(c[0], c[1], float(half.mean()))
        layers.append(Layer(float(ds[i]), tex, region))
    layers.append(Layer(float(ds[-1]), random_texture(channels, rng)))
    return SyntheticScene(layers, size, size, views, views, channels, seed)


def two_plane_scene(seed=0, size=64, views=9, d_front=1.0, d_back=-0.5, channels=3):
    """Front rectangle over the left half of the view, background elsewhere."""
    rng = np.random.default_rng(seed)
    front = Layer(d_front, random_texture(channels, rng),
                  Rect(-size, size / 2.0, -size, 2.0 * size))
    back = Layer(d_back, random_texture(channels, rng))
    return SyntheticScene([front, back], size, size, views, views, channels, seed)


@dataclass
class OracleEstimate:
    disparity: float
    residual: float
    grid: np.ndarray
    low_confidence: bool = False
    center_gradient: float = 0.0

    @property
    def confident(self):
        """True when the patch meets the oracle's contrast precondition."""
        return not self.low_confidence and self.center_gradient >= MIN_CENTER_GRADIENT


def luminance(data):
    data = np.asarray(data)
    if data.shape[-1] == 1:
        return data[..., 0]
    return data @ LUMA.astype(data.dtype if np.issubdtype(data.dtype, np.floating) else np.float64)


def shear_variance_oracle(patch, d_min=-2.0, d_max=2.0, step=0.01):
    """Estimate the dominant line slope of an EPI patch by exhaustive shearing.

    For each candidate ``d`` the patch is refocused by ``d`` (linear
    interpolation, edge clamping) and the luminance variance across the
    angular axis at the center column is measured; the minimum wins, ties
    going to the smallest |d|.
    """
    if not d_min < d_max or not step > 0:
        raise ArgumentError("need d_min < d_max and step > 0")
    data = patch.data if isinstance(patch, (EPI, EPIPatch)) else np.asarray(patch)
    lum = luminance(np.asarray(data, dtype=np.float64))
    A, S = lum.shape
    a0, c = (A - 1) // 2, (S - 1) // 2
    n = int(np.floor((d_max - d_min) / step + 1e-9)) + 1
    grid = d_min + step * np.arange(n)
    # np.interp clamps to the edge samples, matching edge replication
    xs = np.arange(S, dtype=np.float64)
    sampled = np.stack([np.interp(c + (a0 - u) * grid, xs, lum[u]) for u in range(A)], axis=1)
    var = sampled.var(axis=1)
    best = var.min()
    ties = np.flatnonzero(var <= best + 1e-15 * max(best, 1.0))
    k = ties[np.argmin(np.abs(grid[ties]))]
    grad = abs(lum[a0, min(c + 1, S - 1)] - lum[a0, max(c - 1, 0)]) / 2.0
    return OracleEstimate(float(grid[k]), float(var[k]), grid, bool(var.max() < 1e-8), float(grad))
