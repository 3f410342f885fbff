"""Finite-difference gradient checks over every differentiable op and a miniature network."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import NetConfig, init_params, network_forward
from .numerics import ops
from .numerics.gradcheck import finite_diff_check
from .numerics.ops import BatchNormState

OP_TOLERANCE = 1e-4
NETWORK_TOLERANCE = 1e-3


@dataclass
class CheckResult:
    name: str
    seed: int
    error: float
    tolerance: float

    @property
    def passed(self):
        return self.error < self.tolerance


def _shape(rng, lo=2, hi=6):
    return int(rng.integers(lo, hi))


def op_cases(rng):
    """``(name, fn, inputs)`` for one random draw of shapes and values."""
    N, H, W = _shape(rng, 2, 4), _shape(rng, 2, 6), _shape(rng, 3, 8)
    C, Co = _shape(rng, 1, 5), _shape(rng, 1, 5)
    kh, kw = int(rng.integers(1, min(H, 3) + 1)), int(rng.integers(1, min(W, 3) + 1))
    x = rng.standard_normal((N, H, W, C))
    k = rng.standard_normal((kh, kw, C, Co))
    b = rng.standard_normal(Co)
    M, K, P = _shape(rng), _shape(rng), _shape(rng)
    bn_state = BatchNormState.create(C, np.float64)
    bn_eval = BatchNormState(rng.standard_normal(C), rng.uniform(0.5, 2.0, C), steps=1)
    dh, dw = 2 * int(rng.integers(0, H // 2 + 1)), 2 * int(rng.integers(0, W // 2 + 1))
    # keep ReLU inputs away from the kink so central differences are exact
    xr = rng.standard_normal((N, H, W, C))
    xr += np.sign(xr) * 0.05
    pred = rng.standard_normal((N, 1))
    target = pred + np.sign(rng.standard_normal((N, 1))) * rng.uniform(0.05, 1.0, (N, 1))
    rows = rng.choice(H * W, size=min(W, H * W), replace=False)
    return [
        ("conv2d_valid", lambda x, k, b: ops.conv2d_valid(x, k, b), [x, k, b]),
        ("conv2d_valid_nobias", lambda x, k: ops.conv2d_valid(x, k), [x, k]),
        ("relu", ops.relu, [xr]),
        ("batchnorm_train", lambda x, g, be: ops.batchnorm(x, g, be, bn_state, True),
         [x, rng.uniform(0.5, 1.5, C), rng.standard_normal(C)]),
        ("batchnorm_eval", lambda x, g, be: ops.batchnorm(x, g, be, bn_eval, False),
         [x, rng.uniform(0.5, 1.5, C), rng.standard_normal(C)]),
        ("matmul", ops.matmul, [rng.standard_normal((M, K)), rng.standard_normal((K, P))]),
        ("matmul_batched", ops.matmul, [rng.standard_normal((N, M, K)), rng.standard_normal((N, K, P))]),
        ("concat_channels", ops.concat_channels, [x, rng.standard_normal((N, H, W, Co))]),
        ("center_slice", lambda x: ops.center_slice(x, H - dh, W - dw), [x]),
        ("mae_loss", ops.mae_loss, [pred, target]),
        ("add_broadcast", ops.add, [x, rng.standard_normal(C)]),
        ("mul", ops.mul, [x, rng.standard_normal((N, H, W, C))]),
        ("transpose_reshape", lambda x: ops.reshape(ops.transpose(x, (0, 2, 1, 3)), (N, -1)), [x]),
        ("take", lambda a: ops.take(a, rows, axis=1), [rng.standard_normal((N, H * W, C))]),
        ("mean", ops.mean, [x]),
    ]


def chain_case(rng, length=5):
    """A random composition of ``length`` shape-preserving or shrinking ops."""
    N, H, W, C = 3, 6, 9, 3
    params = {
        "k1": rng.standard_normal((1, 2, C, C)),
        "k2": rng.standard_normal((2, 1, C, C)),
        "g": rng.uniform(0.5, 1.5, C),
        "b": rng.standard_normal(C),
    }
    state = BatchNormState.create(C, np.float64)
    steps = [
        lambda x, p: ops.conv2d_valid(x, p["k1"]),
        lambda x, p: ops.conv2d_valid(x, p["k2"]),
        lambda x, p: ops.batchnorm(x, p["g"], p["b"], state, True),
        lambda x, p: ops.mul(x, x),
        lambda x, p: ops.add(x, p["b"]),
        lambda x, p: ops.center_slice(x, x.shape[1], x.shape[2] - 2 if x.shape[2] > 2 else x.shape[2]),
        lambda x, p: ops.concat_channels(x, x),
    ]
    picks = [int(i) for i in rng.integers(0, len(steps), length)]
    names = list(params)

    def fn(x, *vals):
        p = dict(zip(names, vals))
        for i in picks:
            if x.shape[-1] != C and i in (0, 1, 2, 4):
                x = ops.take(x, np.arange(C), axis=3)
            x = steps[i](x, p)
        return x

    return "chain:" + "-".join(str(i) for i in picks), fn, [rng.standard_normal((N, H, W, C))] + [params[n] for n in names]


def mini_config():
    """Width-4 network with the full topology, shrunk to 5x13 patches."""
    return NetConfig(H=5, W=13, C=3, width=4, relation_width=3, n_conv_blocks=3, n_residual_blocks=2)


def network_case(rng):
    cfg = mini_config()
    params = init_params(cfg, rng, precision="double")
    names = list(params.tensors)
    # zero biases would park ReLU inputs exactly on the kink
    for n, t in params.tensors.items():
        if n.endswith(".b") or n.endswith(".beta"):
            t.data = rng.normal(0.0, 0.1, t.shape)
        elif n.endswith(".gamma"):
            t.data = rng.uniform(0.5, 1.5, t.shape)
    N = 3
    ph = rng.uniform(0, 1, (N, cfg.H, cfg.W, cfg.C))
    pv = rng.uniform(0, 1, (N, cfg.H, cfg.W, cfg.C))

    def fn(ph, pv, *vals):
        for n, t in zip(names, vals):
            params.tensors[n] = t
        return network_forward(ph, pv, params, training=True)

    return fn, [ph, pv] + [params.tensors[n].data.copy() for n in names]


def run_suite(seeds=20, network=True, chains=True, progress=None):
    results = []
    for seed in range(seeds):
        rng = np.random.default_rng(1000 + seed)
        for name, fn, inputs in op_cases(rng):
            err = finite_diff_check(fn, inputs, h=1e-5, n_coords=64, rng=rng)
            results.append(CheckResult(name, seed, err, OP_TOLERANCE))
        if chains:
            name, fn, inputs = chain_case(rng)
            err = finite_diff_check(fn, inputs, h=1e-5, n_coords=64, rng=rng)
            results.append(CheckResult(name, seed, err, OP_TOLERANCE))
        if network:
            fn, inputs = network_case(rng)
            err = finite_diff_check(fn, inputs, h=1e-6, n_coords=3, rng=rng)
            results.append(CheckResult("network", seed, err, NETWORK_TOLERANCE))
        if progress:
            progress(seed, results)
    return results
