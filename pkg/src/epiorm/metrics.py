"""Disparity-map metrics: bad-pixel ratio, scaled MSE and error maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ShapeError

BADPIX_THRESHOLD = 0.07


def _prepare(d, gt, mask):
    d = np.asarray(d, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if d.shape != gt.shape:
        raise ShapeError(f"prediction {d.shape} and ground truth {gt.shape} differ")
    mask = np.ones(d.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if mask.shape != d.shape:
        raise ShapeError("mask shape differs from the maps")
    if not mask.any():
        raise ArgumentError("evaluation mask is empty")
    return d, gt, mask


def error_map(d, gt, t=BADPIX_THRESHOLD, mask=None):
    """Boolean map, True where ``|d - gt| > t`` inside ``mask``."""
    d = np.asarray(d, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if d.shape != gt.shape:
        raise ShapeError(f"prediction {d.shape} and ground truth {gt.shape} differ")
    bad = np.abs(d - gt) > t
    return bad if mask is None else bad & np.asarray(mask, dtype=bool)


def badpix(d, gt, mask=None, t=BADPIX_THRESHOLD):
    """Percentage of masked pixels whose absolute error is strictly above ``t``."""
    d, gt, mask = _prepare(d, gt, mask)
    return 100.0 * np.count_nonzero(error_map(d, gt, t, mask)) / np.count_nonzero(mask)


def mse100(d, gt, mask=None):
    """Mean squared error over the mask, times 100."""
    d, gt, mask = _prepare(d, gt, mask)
    return float(np.mean((d[mask] - gt[mask]) ** 2) * 100.0)


@dataclass
class EvalReport:
    scene: str
    badpix: float
    mse100: float
    runtime: float = 0.0
    fingerprint: str = ""
    mask: str = "all"
    threshold: float = BADPIX_THRESHOLD
    n_pixels: int = 0

    def as_text(self):
        lines = [
            f"scene: {self.scene}",
            f"mask: {self.mask}",
            f"pixels: {self.n_pixels}",
            f"threshold: {self.threshold}",
            f"BadPix: {self.badpix:.2f}",
            f"MSE: {self.mse100:.4f}",
            f"runtime: {self.runtime:.3f}",
            f"fingerprint: {self.fingerprint}",
        ]
        return "\n".join(lines) + "\n"

    @staticmethod
    def table_header():
        return "scene\tmask\tBadPix\tMSE\truntime\tfingerprint"

    def table_row(self):
        return (f"{self.scene}\t{self.mask}\t{self.badpix:.2f}\t{self.mse100:.4f}"
                f"\t{self.runtime:.3f}\t{self.fingerprint}")


def evaluate(d, gt, mask=None, scene="scene", t=BADPIX_THRESHOLD, runtime=0.0,
             fingerprint="", mask_label=None):
    d, gt, m = _prepare(d, gt, mask)
    label = mask_label or ("all" if mask is None else "custom")
    return EvalReport(scene, badpix(d, gt, m, t), mse100(d, gt, m), runtime, fingerprint,
                      label, t, int(np.count_nonzero(m)))
