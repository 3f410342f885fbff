"""Patch sampling, training, full-image inference and the ablation harness."""

from __future__ import annotations

import contextlib
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
from threadpoolctl import threadpool_limits

from .config import fingerprint
from .errors import ArgumentError, TrainingError
from .lightfield import all_patch_pairs_row, interior_mask, patch_pair, DisparityMap
from .metrics import evaluate
from .network import init_params, network_forward, predict
from .numerics import ops
from .numerics.checkpoint import save_checkpoint
from .numerics.optim import OptimizerState, halving_lr, rmsprop_step
from .numerics.tensor import PRECISIONS, Tape
from .refocus import _row_offsets, adjust_gt, max_representable_disparity, resample_axis
from .synth import gen_lightfield, random_scene

log = logging.getLogger(__name__)


@dataclass
class PatchPool:
    """Patch pairs as arrays: ``h``/``v`` are ``(N, A, W, C)``."""

    h: np.ndarray
    v: np.ndarray
    gt: np.ndarray
    scene: np.ndarray
    centers: np.ndarray = None

    def __len__(self):
        return len(self.gt)

    def subset(self, idx):
        centers = None if self.centers is None else self.centers[idx]
        return PatchPool(self.h[idx], self.v[idx], self.gt[idx], self.scene[idx], centers)

    @staticmethod
    def concat(pools):
        cat = lambda name: np.concatenate([getattr(p, name) for p in pools])
        centers = None if any(p.centers is None for p in pools) else cat("centers")
        return PatchPool(cat("h"), cat("v"), cat("gt"), cat("scene"), centers)


def deterministic_mode(enabled=True):
    """Context pinning BLAS to one thread so reductions are reproducible."""
    return threadpool_limits(1) if enabled else contextlib.nullcontext()


def sample_patches(dataset, n, rng, W=29, border="reject", dtype=np.float32, scene_offset=0):
    """Draw ``n`` patch pairs uniformly over (scene, pixel).

    ``dataset`` is a sequence of ``(LightField4D, DisparityMap)``. With
    ``border="reject"`` only pixels whose windows fit are eligible; with
    ``"replicate"`` every pixel inside the map's mask is.
    """
    if not dataset:
        raise ArgumentError("dataset is empty")
    candidates = []
    for lf, dmap in dataset:
        ok = dmap.mask.copy()
        if border == "reject":
            ok &= interior_mask(dmap.shape, W)
        candidates.append(np.flatnonzero(ok))
    sizes = np.array([len(c) for c in candidates])
    if sizes.sum() == 0:
        raise ArgumentError("no eligible pixels in dataset")
    picks = np.sort(rng.integers(0, sizes.sum(), n)) if n else np.zeros(0, dtype=np.int64)
    bounds = np.cumsum(sizes)
    scene_idx = np.searchsorted(bounds, picks, side="right")
    lf0 = dataset[0][0]
    A, C = lf0.U, lf0.C
    h = np.empty((n, A, W, C), dtype)
    v = np.empty((n, A, W, C), dtype)
    gt = np.empty(n, dtype)
    centers = np.empty((n, 2), np.int64)
    for k, (s, p) in enumerate(zip(scene_idx, picks)):
        lf, dmap = dataset[s]
        local = p - (bounds[s] - sizes[s])
        y, x = divmod(int(candidates[s][local]), dmap.shape[1])
        ph, pv = patch_pair(lf, x, y, W, "replicate", float(dmap.values[y, x]))
        h[k], v[k], gt[k] = ph.data, pv.data, dmap.values[y, x]
        centers[k] = (x, y)
    # undo the sort so draws are in random order
    order = rng.permutation(n)
    return PatchPool(h[order], v[order], gt[order], scene_idx[order] + scene_offset, centers[order])


def synthetic_pool(n_patches, n_scenes, seed=0, size=64, views=9, d_range=(-2.0, 2.0),
                   W=29, channels=3):
    """Patch pairs drawn from freshly rendered random layered scenes.

    Scenes are rendered one at a time and discarded, each contributing an
    equal share of the pairs (all scenes have the same interior area).
    """
    rng = np.random.default_rng(seed)
    pools = []
    per_scene = np.full(n_scenes, n_patches // n_scenes)
    per_scene[: n_patches % n_scenes] += 1
    for i in range(n_scenes):
        scene = random_scene(int(rng.integers(2**31)), size, views, channels, d_range)
        pair = gen_lightfield(scene)
        pools.append(sample_patches([pair], int(per_scene[i]), rng, W, scene_offset=i))
    return PatchPool.concat(pools)


def split_pool(pool, val_fraction, rng):
    """Hold out ``val_fraction`` of each scene's samples."""
    train_idx, val_idx = [], []
    for s in np.unique(pool.scene):
        idx = rng.permutation(np.flatnonzero(pool.scene == s))
        k = int(round(len(idx) * val_fraction))
        val_idx.append(idx[:k])
        train_idx.append(idx[k:])
    return pool.subset(np.sort(np.concatenate(train_idx))), pool.subset(np.sort(np.concatenate(val_idx)))


class AugmentedSampler:
    """Uniform draws from the refocus-augmented pool without materializing it.

    The virtual pool holds every original sample plus one copy per shift
    whose adjusted |gt| is within ``max_abs_gt`` -- the same set
    :func:`epiorm.refocus.augment_arrays` would build.
    """

    def __init__(self, pool, shifts=(), max_abs_gt=None, interp="linear"):
        self.pool = pool
        self.shifts = np.array([0.0] + [float(s) for s in shifts])
        self.interp = interp
        n = len(pool)
        sample = np.repeat(np.arange(n), len(self.shifts))
        which = np.tile(np.arange(len(self.shifts)), n)
        if max_abs_gt is not None:
            adj = adjust_gt(pool.gt[sample], self.shifts[which])
            keep = (which == 0) | (np.abs(adj) <= max_abs_gt)
            sample, which = sample[keep], which[keep]
        self.sample, self.which = sample, which

    def __len__(self):
        return len(self.sample)

    def draw(self, n, rng):
        k = rng.integers(0, len(self.sample), n)
        return self.gather(self.sample[k], self.which[k])

    def gather(self, sample, which):
        p = self.pool
        h, v = p.h[sample].copy(), p.v[sample].copy()
        gt = p.gt[sample].copy()
        for j in np.unique(which):
            if j == 0:
                continue
            s = float(self.shifts[j])
            rows = which == j
            offsets = _row_offsets(h.shape[1], s, 4, 1)
            h[rows] = resample_axis(h[rows], offsets, 2, self.interp)
            v[rows] = resample_axis(v[rows], offsets, 2, self.interp)
            gt[rows] = adjust_gt(gt[rows], s)
        return h, v, gt


@dataclass
class TrainResult:
    params: object
    log: list
    val_mae: float
    fingerprint: str
    train_pool: PatchPool = None
    val_pool: PatchPool = None
    seconds: float = 0.0


def mae_on(pool, params, batch_size=256):
    pred = predict(pool.h, pool.v, params, batch_size)
    return float(np.mean(np.abs(pred.astype(np.float64) - pool.gt.astype(np.float64))))


def checkpoint_meta(train_cfg, net_cfg, params):
    from dataclasses import asdict

    return {
        "format": "epiorm-params",
        "net": asdict(net_cfg),
        "train": asdict(train_cfg),
        "arch_fingerprint": net_cfg.fingerprint(),
        "config_fingerprint": fingerprint(train_cfg, net_cfg),
        "bn_steps": params.bn_steps(),
    }


def save_params(path, params, train_cfg, net_cfg):
    save_checkpoint(path, params.to_arrays(), checkpoint_meta(train_cfg, net_cfg, params))


def train(config, net_cfg, data, checkpoint_path=None, log_lines=None, deterministic=True):
    """Train a network with MAE loss and RMSprop.

    ``data`` is a :class:`PatchPool` or a sequence of
    ``(LightField4D, DisparityMap)`` scenes (sampled with
    ``config.n_patches``). The pool is split per scene into train and
    validation parts before augmentation, which only touches the train part.
    Raises :class:`TrainingError` on a non-finite loss.
    """
    config.validate()
    net_cfg.validate()
    rng = np.random.default_rng(config.seed)
    if not isinstance(data, PatchPool):
        data = sample_patches(data, config.n_patches, rng, net_cfg.W)
    if len(data) == 0:
        raise ArgumentError("no training samples")
    train_pool, val_pool = split_pool(data, config.val_fraction, rng)
    if config.augment and config.shift_values():
        limit = max_representable_disparity(net_cfg.H, net_cfg.W, config.augment_safety)
        sampler = AugmentedSampler(train_pool, config.shift_values(), limit)
    else:
        sampler = AugmentedSampler(train_pool)
    log.info("training on %d samples (%d after augmentation), %d held out",
             len(train_pool), len(sampler), len(val_pool))
    dtype = PRECISIONS[config.precision]
    lines = [] if log_lines is None else log_lines
    fp = fingerprint(config, net_cfg)
    lines.append(f"# config {fp}")
    lines.append("iter,loss,lr,seconds")
    start = time.perf_counter()
    with deterministic_mode(deterministic):
        params = init_params(net_cfg, np.random.default_rng(config.seed + 1), config.precision)
        state = OptimizerState(config.lr, config.rho, config.eps, config.weight_decay)
        for it in range(config.iterations):
            h, v, gt = sampler.draw(config.batch_size, rng)
            state.lr = halving_lr(config.lr, config.iterations, it, config.lr_halvings)
            for t in params.tensors.values():
                t.grad = None
            with Tape() as tape:
                pred = network_forward(h.astype(dtype), v.astype(dtype), params, training=True)
                loss = ops.mae_loss(pred, gt.astype(dtype).reshape(-1, 1))
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingError(
                    f"non-finite loss at iteration {it} (lr={state.lr:g}, "
                    f"batch gt mean={gt.mean():.4f} std={gt.std():.4f}, "
                    f"patch range=[{h.min():.3f}, {h.max():.3f}])")
            tape.backward(loss)
            rmsprop_step(params.tensors, {k: t.grad for k, t in params.tensors.items()}, state)
            if (it + 1) % config.log_every == 0 or it == 0 or it + 1 == config.iterations:
                lines.append(f"{it + 1},{value:.6f},{state.lr:.6g},{time.perf_counter() - start:.2f}")
                log.info(lines[-1])
            if checkpoint_path and config.checkpoint_every and (it + 1) % config.checkpoint_every == 0:
                save_params(checkpoint_path, params, config, net_cfg)
        val_mae = mae_on(val_pool, params) if len(val_pool) else float("nan")
    if checkpoint_path:
        save_params(checkpoint_path, params, config, net_cfg)
    lines.append(f"# val_mae {val_mae:.6f}")
    return TrainResult(params, lines, val_mae, fp, train_pool, val_pool, time.perf_counter() - start)


def infer_map(lf, params, batch_size=512):
    """Disparity for every center-view pixel (edge replication at borders).

    The returned map's mask marks interior pixels whose patches needed no
    replication.
    """
    cfg = params.config
    if lf.U != cfg.H or lf.V != cfg.H:
        raise ArgumentError(f"light field is {lf.U}x{lf.V} views, network expects {cfg.H}x{cfg.H}")
    if lf.C != cfg.C:
        raise ArgumentError(f"light field has {lf.C} channels, network expects {cfg.C}")
    out = np.empty((lf.Y, lf.X), dtype=np.float64)
    rows_per_chunk = max(1, batch_size // lf.X)
    for y0 in range(0, lf.Y, rows_per_chunk):
        ys = range(y0, min(lf.Y, y0 + rows_per_chunk))
        pairs = [all_patch_pairs_row(lf, y, cfg.W) for y in ys]
        h = np.concatenate([p[0] for p in pairs])
        v = np.concatenate([p[1] for p in pairs])
        out[y0:y0 + len(ys)] = predict(h, v, params, batch_size).reshape(len(ys), lf.X)
    return DisparityMap(out, interior_mask((lf.Y, lf.X), cfg.W), "interior")


ABLATION_CELLS = (
    ("Baseline", False, False),
    ("w/ ORM", True, False),
    ("w/ EPIR", False, True),
    ("Full model", True, True),
)


@dataclass
class AblationReport:
    cells: list = field(default_factory=list)  # (name, badpix, mse100, val_mae)

    def as_table(self):
        names = [c[0] for c in self.cells]
        w = max(12, *(len(n) + 2 for n in names))
        head = "Metric".ljust(8) + "".join(n.rjust(w) for n in names)
        bad = "BadPix".ljust(8) + "".join(f"{c[1]:.2f}".rjust(w) for c in self.cells)
        mse = "MSE".ljust(8) + "".join(f"{c[2]:.3f}".rjust(w) for c in self.cells)
        return "\n".join([head, bad, mse]) + "\n"

    def direction(self):
        by = {c[0]: c[1] for c in self.cells}
        notes = []
        for name in ("w/ ORM", "w/ EPIR", "Full model"):
            if name in by and "Baseline" in by:
                verdict = "improves on" if by[name] < by["Baseline"] else "does not improve on"
                notes.append(f"{name} {verdict} Baseline ({by[name]:.2f} vs {by['Baseline']:.2f} BadPix)")
        return notes


def run_ablation(train_cfg, net_cfg, pool, test_scenes, deterministic=True):
    """Train the four ORM/EPIR combinations on one seed and score them on ``test_scenes``."""
    report = AblationReport()
    for name, use_orm, use_epir in ABLATION_CELLS:
        cfg_t = replace(train_cfg, augment=use_epir)
        cfg_n = replace(net_cfg, use_orm=use_orm)
        result = train(cfg_t, cfg_n, pool, deterministic=deterministic)
        preds, gts, masks = [], [], []
        for lf, dmap in test_scenes:
            pm = infer_map(lf, result.params)
            preds.append(pm.values)
            gts.append(dmap.values)
            masks.append(pm.mask & dmap.mask)
        rep = evaluate(np.concatenate([p.ravel() for p in preds]),
                       np.concatenate([g.ravel() for g in gts]),
                       np.concatenate([m.ravel() for m in masks]))
        report.cells.append((name, rep.badpix, rep.mse100, result.val_mae))
        log.info("ablation %s: BadPix %.2f MSE %.3f val MAE %.4f", name, rep.badpix, rep.mse100, result.val_mae)
    return report
