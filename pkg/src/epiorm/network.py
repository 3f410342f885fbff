"""Two-branch EPI network with Oriented Relation Modules.

Each branch maps a ``H x W x C`` EPI patch through two ORMs, a stack of
``Conv-ReLU-Conv-BN-ReLU`` blocks with valid 2x2 / 1x2 convolutions and a
residual module whose skips are centered slices. A merging block fuses the
horizontal and vertical features into one disparity value. The branches
share topology but not weights.

All tensors are NHWC; kernels are ``(KH, KW, Cin, Cout)``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ShapeError
from .numerics import ops
from .numerics.ops import BatchNormState
from .numerics.tensor import PRECISIONS, Tensor

BRANCHES = ("h", "v")


def parse_kernels(text):
    """``"2x2,1x2"`` -> ``((2, 2), (1, 2))``."""
    out = []
    for part in text.split(","):
        kh, kw = part.strip().lower().split("x")
        out.append((int(kh), int(kw)))
    return tuple(out)


@dataclass
class NetConfig:
    H: int = 9
    W: int = 29
    C: int = 3
    width: int = 32
    relation_width: int = 16
    relation_bias: bool = True
    use_orm: bool = True
    n_orm: int = 2
    conv_kernels: str = "2x2,1x2"
    n_conv_blocks: int = 7
    residual_kernels: str = "1x2,1x2"
    n_residual_blocks: int = 6
    merge_kernels: str = "2x2,1x2"
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5

    def validate(self):
        if self.relation_width < 1 or self.width < 1:
            raise ShapeError("widths must be positive")
        if self.H % 2 == 0 or self.W % 2 == 0:
            raise ShapeError(f"patch extents must be odd, got {self.H}x{self.W}")
        for name in ("conv_kernels", "residual_kernels", "merge_kernels"):
            if len(parse_kernels(getattr(self, name))) != 2:
                raise ShapeError(f"{name} must list exactly two kernels")
        shapes = self.feature_shapes()
        if shapes["merge"] != (1, 1):
            raise ShapeError(f"kernel schedule ends at {shapes['merge']}, expected 1x1")

    def feature_shapes(self):
        """Spatial size after each stage of one branch and after the merge block."""
        h, w = self.H, self.W
        shapes = {"input": (h, w)}
        for stage, kernels, count in (
            ("conv", self.conv_kernels, self.n_conv_blocks),
            ("residual", self.residual_kernels, self.n_residual_blocks),
            ("merge", self.merge_kernels, 1),
        ):
            for _ in range(count):
                for kh, kw in parse_kernels(kernels):
                    h, w = h - kh + 1, w - kw + 1
                    if h < 1 or w < 1:
                        raise ShapeError(f"kernel schedule collapses the feature map in {stage}")
            shapes[stage] = (h, w)
        return shapes

    def branch_in_channels(self):
        return self.C + (self.n_orm * self.W if self.use_orm else 0)

    def fingerprint(self):
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class NetworkParams:
    """Learned tensors keyed by dotted name, batch-norm running state, and the config."""

    tensors: dict
    bn: dict
    config: NetConfig

    def trainable(self):
        return self.tensors

    def count(self):
        return int(sum(t.data.size for t in self.tensors.values()))

    def to_arrays(self):
        arrays = {k: t.data for k, t in self.tensors.items()}
        for k, s in self.bn.items():
            arrays[f"{k}.running_mean"] = s.running_mean
            arrays[f"{k}.running_var"] = s.running_var
        return arrays

    def bn_steps(self):
        return {k: s.steps for k, s in self.bn.items()}

    @classmethod
    def from_arrays(cls, arrays, config, bn_steps=None):
        bn_steps = bn_steps or {}
        tensors, bn = {}, {}
        for k, a in arrays.items():
            if k.endswith(".running_mean") or k.endswith(".running_var"):
                continue
            tensors[k] = Tensor(np.array(a), requires_grad=True, name=k)
        for k, a in arrays.items():
            if k.endswith(".running_mean"):
                base = k[: -len(".running_mean")]
                bn[base] = BatchNormState(np.array(a), np.array(arrays[base + ".running_var"]),
                                          config.bn_momentum, config.bn_eps, bn_steps.get(base, 0))
        return cls(tensors, bn, config)

    def copy(self):
        return NetworkParams.from_arrays({k: v.copy() for k, v in self.to_arrays().items()},
                                         self.config, self.bn_steps())


def init_params(cfg, rng=None, precision="single", branches=BRANCHES):
    """He-normal kernels, zero biases, unit gamma and zero beta."""
    cfg.validate()
    rng = np.random.default_rng(0) if rng is None else rng
    dtype = PRECISIONS[precision]
    tensors, bn = {}, {}

    def conv(name, kh, kw, cin, cout, bias=True):
        std = np.sqrt(2.0 / (kh * kw * cin))
        tensors[name + ".k"] = Tensor(rng.standard_normal((kh, kw, cin, cout)).astype(dtype) * dtype(std),
                                      requires_grad=True, name=name + ".k")
        if bias:
            tensors[name + ".b"] = Tensor(np.zeros(cout, dtype), requires_grad=True, name=name + ".b")

    def norm(name, c):
        tensors[name + ".gamma"] = Tensor(np.ones(c, dtype), requires_grad=True, name=name + ".gamma")
        tensors[name + ".beta"] = Tensor(np.zeros(c, dtype), requires_grad=True, name=name + ".beta")
        bn[name] = BatchNormState.create(c, dtype, cfg.bn_momentum, cfg.bn_eps)

    def block(name, kernels, cin, cout, with_norm=True):
        (kh1, kw1), (kh2, kw2) = parse_kernels(kernels)
        conv(name + ".c1", kh1, kw1, cin, cout)
        conv(name + ".c2", kh2, kw2, cout, cout)
        if with_norm:
            norm(name + ".bn", cout)

    for br in branches:
        c = cfg.C
        if cfg.use_orm:
            for i in range(cfg.n_orm):
                conv(f"{br}.orm{i}.e1", 1, 1, c, cfg.relation_width, cfg.relation_bias)
                conv(f"{br}.orm{i}.e2", 1, 1, c, cfg.relation_width, cfg.relation_bias)
                c += cfg.W
        for i in range(cfg.n_conv_blocks):
            block(f"{br}.conv{i}", cfg.conv_kernels, c, cfg.width)
            c = cfg.width
        for i in range(cfg.n_residual_blocks):
            block(f"{br}.res{i}", cfg.residual_kernels, cfg.width, cfg.width)
    block("merge.b1", cfg.merge_kernels, len(branches) * cfg.width, cfg.width)
    conv("merge.b2.c1", 1, 1, cfg.width, cfg.width)
    conv("merge.b2.c2", 1, 1, cfg.width, 1)
    return NetworkParams(tensors, bn, cfg)


def param_count(cfg, n_branches=2):
    """Number of learned values for a model with ``n_branches`` EPI branches."""
    names = tuple(f"b{i}" for i in range(n_branches))
    return init_params(cfg, np.random.default_rng(0), branches=names).count()


def _conv(x, params, name):
    t = params.tensors
    return ops.conv2d_valid(x, t[name + ".k"], t.get(name + ".b"))


def orm_forward(x, params, prefix, cfg, return_relation=False):
    """Oriented Relation Module: ``(N, H, W, C)`` -> ``(N, H, W, W + C)``.

    Two 1x1 convolutions embed every patch position; the relation of each
    center-row position with all ``H * W`` positions (``W`` rows of the full
    ``(H W) x (H W)`` relation matrix) is reshaped to ``W`` channels over the
    ``H x W`` grid, rectified and appended to the input. Only those rows are
    computed unless ``return_relation`` is set, in which case the full
    relation matrix is built, sliced, and returned as a second value.
    """
    N, H, W, C = x.shape
    if (H, W) != (cfg.H, cfg.W):
        raise ShapeError(f"ORM configured for {cfg.H}x{cfg.W}, got {H}x{W}")
    e1 = ops.reshape(_conv(x, params, prefix + ".e1"), (N, H * W, -1))
    e2 = ops.reshape(_conv(x, params, prefix + ".e2"), (N, H * W, -1))
    rows = (H - 1) // 2 * W + np.arange(W)
    e2t = ops.transpose(e2, (0, 2, 1))
    relation = None
    if return_relation:
        relation = ops.matmul(e1, e2t)
        f3 = ops.take(relation, rows, axis=1)
    else:
        f3 = ops.matmul(ops.take(e1, rows, axis=1), e2t)
    f4 = ops.relu(ops.reshape(ops.transpose(f3, (0, 2, 1)), (N, H, W, W)))
    out = ops.concat_channels(x, f4)
    return (out, relation) if return_relation else out


def conv_block_forward(x, params, prefix, training=True, norm=True, final_relu=True):
    """``Conv-ReLU-Conv-BN-ReLU``; ``norm=False, final_relu=False`` gives ``Conv-ReLU-Conv``."""
    y = ops.relu(_conv(x, params, prefix + ".c1"))
    y = _conv(y, params, prefix + ".c2")
    if norm:
        t = params.tensors
        name = prefix + ".bn"
        y = ops.batchnorm(y, t[name + ".gamma"], t[name + ".beta"], params.bn[name], training)
    return ops.relu(y) if final_relu else y


def residual_block_forward(x, params, prefix, training=True, norm=True):
    y = conv_block_forward(x, params, prefix, training, norm)
    if y.shape[-1] != x.shape[-1]:
        raise ShapeError(f"residual block changes channels {x.shape[-1]} -> {y.shape[-1]}")
    return ops.add(y, ops.center_slice(x, y.shape[1], y.shape[2]))


def branch_forward(patch, params, branch, training=True):
    cfg = params.config
    x = patch
    if x.shape[1:] != (cfg.H, cfg.W, cfg.C):
        raise ShapeError(f"branch expects (N, {cfg.H}, {cfg.W}, {cfg.C}), got {x.shape}")
    if cfg.use_orm:
        for i in range(cfg.n_orm):
            x = orm_forward(x, params, f"{branch}.orm{i}", cfg)
    for i in range(cfg.n_conv_blocks):
        x = conv_block_forward(x, params, f"{branch}.conv{i}", training)
    for i in range(cfg.n_residual_blocks):
        x = residual_block_forward(x, params, f"{branch}.res{i}", training)
    return x


def merge_forward(feat_h, feat_v, params, training=True):
    """Fuse branch features into ``(N, 1)`` disparities; no output activation."""
    if feat_h.shape != feat_v.shape:
        raise ShapeError(f"branch features differ: {feat_h.shape} vs {feat_v.shape}")
    x = ops.concat_channels(feat_h, feat_v)
    x = conv_block_forward(x, params, "merge.b1", training)
    x = conv_block_forward(x, params, "merge.b2", training, norm=False, final_relu=False)
    if x.shape[1:] != (1, 1, 1):
        raise ShapeError(f"merge output is {x.shape[1:]}, expected (1, 1, 1)")
    return ops.reshape(x, (x.shape[0], 1))


def network_forward(patch_h, patch_v, params, training=False):
    """Disparity (pixels per view step) for each patch pair in the batch."""
    ph = patch_h if isinstance(patch_h, Tensor) else Tensor(patch_h)
    pv = patch_v if isinstance(patch_v, Tensor) else Tensor(patch_v)
    fh = branch_forward(ph, params, "h", training)
    fv = branch_forward(pv, params, "v", training)
    return merge_forward(fh, fv, params, training)


def predict(patch_h, patch_v, params, batch_size=256):
    """Eval-mode disparities for arrays of patches, as a flat numpy array."""
    from .numerics.tensor import no_grad

    dtype = next(iter(params.tensors.values())).dtype
    out = []
    with no_grad():
        for i in range(0, len(patch_h), batch_size):
            ph = np.asarray(patch_h[i:i + batch_size], dtype=dtype)
            pv = np.asarray(patch_v[i:i + batch_size], dtype=dtype)
            out.append(network_forward(ph, pv, params, training=False).data[:, 0])
    return np.concatenate(out) if out else np.zeros(0, dtype)
