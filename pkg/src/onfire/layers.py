"""Layer kinds: specs, shape rules, parameter init, forward/backward.

Each graph node is a :class:`LayerSpec`; the numeric behaviour of every
``kind`` lives in a small implementation class registered in :data:`KINDS`.
Activations follow the convention that ReLU comes after every convolution;
when batch norm is present the order is conv (linear) -> BN -> ReLU, so the
``act`` hyperparameter sits on whichever node applies it.

Defaults that the architectures rely on: BN ``eps=1e-3``/``momentum=0.99``;
LRN ``radius=2, alpha=1e-4, beta=0.75, bias=1.0`` (the classic AlexNet
constants); inverted dropout so inference needs no rescaling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import ContractError, GraphValidationError, ShapeError
from .tensor import check_finite

BN_EPS = 1e-3
BN_MOMENTUM = 0.99
LRN_RADIUS = 2
LRN_ALPHA = 1e-4
LRN_BETA = 0.75
LRN_BIAS = 1.0


@dataclass
class LayerSpec:
    """One graph node: a unique name, a kind, hyperparameters, input names."""

    name: str
    kind: str
    cfg: dict = field(default_factory=dict)
    inputs: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GraphValidationError(f"node {self.name!r}: unknown kind {self.kind!r}")
        KINDS[self.kind].validate(self)


def _cfg_geom(cfg, kh_key="kh", kw_key="kw"):
    return ops.ConvGeometry(cfg[kh_key], cfg[kw_key], cfg.get("stride", 1),
                            cfg.get("padding", "same"))


def he_uniform(shape, fan_in: int, rng: np.random.Generator) -> np.ndarray:
    """Fan-in scaled uniform init: U(-sqrt(6/fan_in), sqrt(6/fan_in)).

    The bound gives weight variance 2/fan_in.
    """
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def _apply_act(y, act):
    if act == "relu":
        return ops.relu_fwd(y)
    return y, None


def _act_bwd(dy, act, mask):
    if act == "relu":
        return ops.relu_bwd(dy, mask)
    return dy


class _Base:
    min_inputs = 1
    max_inputs = 1

    @classmethod
    def validate(cls, spec):
        pass

    @classmethod
    def init_params(cls, spec, in_shapes, rng):
        return {}

    @classmethod
    def init_state(cls, spec, in_shapes):
        return {}


class InputKind(_Base):
    min_inputs = 0
    max_inputs = 0

    @classmethod
    def validate(cls, spec):
        for key in ("h", "w", "c"):
            if spec.cfg.get(key, 0) < 1:
                raise GraphValidationError(f"input node {spec.name!r} needs positive {key}")

    @classmethod
    def out_shape(cls, spec, in_shapes):
        return (spec.cfg["h"], spec.cfg["w"], spec.cfg["c"])


class ConvKind(_Base):
    @classmethod
    def validate(cls, spec):
        if spec.cfg.get("filters", 0) < 1:
            raise GraphValidationError(f"conv {spec.name!r}: filters must be >= 1")
        _cfg_geom(spec.cfg)

    @classmethod
    def out_shape(cls, spec, in_shapes):
        (h, w, c), = in_shapes
        geom = _cfg_geom(spec.cfg)
        oh, ow = geom.out_hw(h, w)
        return (oh, ow, spec.cfg["filters"])

    @classmethod
    def init_params(cls, spec, in_shapes, rng):
        (h, w, c), = in_shapes
        kh, kw, f = spec.cfg["kh"], spec.cfg["kw"], spec.cfg["filters"]
        return {
            "w": he_uniform((kh, kw, c, f), kh * kw * c, rng),
            "b": np.zeros(f, dtype=np.float32),
        }

    @classmethod
    def forward(cls, spec, xs, params, state, mode, rng):
        y, cache = ops.conv2d_fwd(xs[0], params["w"], params["b"], _cfg_geom(spec.cfg))
        y, mask = _apply_act(y, spec.cfg.get("act", "relu"))
        return y, (cache, mask)

    @classmethod
    def backward(cls, spec, dy, cache, params):
        conv_cache, mask = cache
        dy = _act_bwd(dy, spec.cfg.get("act", "relu"), mask)
        dx, dw, db = ops.conv2d_bwd(dy, conv_cache)
        return [dx], {"w": dw, "b": db}


class DenseKind(_Base):
    @classmethod
    def validate(cls, spec):
        if spec.cfg.get("units", 0) < 1:
            raise GraphValidationError(f"dense {spec.name!r}: units must be >= 1")

    @classmethod
    def out_shape(cls, spec, in_shapes):
        (shape,) = in_shapes
        if len(shape) != 1:
            raise GraphValidationError(
                f"dense {spec.name!r} expects flat input, got shape {shape}")
        return (spec.cfg["units"],)

    @classmethod
    def init_params(cls, spec, in_shapes, rng):
        (d,), = in_shapes
        units = spec.cfg["units"]
        return {
            "w": he_uniform((d, units), d, rng),
            "b": np.zeros(units, dtype=np.float32),
        }

    @classmethod
    def forward(cls, spec, xs, params, state, mode, rng):
        y = xs[0] @ params["w"] + params["b"]
        check_finite(y, f"dense {spec.name!r} output")
        y, mask = _apply_act(y, spec.cfg.get("act", "none"))
        return y, (xs[0], mask)

    @classmethod
    def backward(cls, spec, dy, cache, params):
        x, mask = cache
        dy = _act_bwd(dy, spec.cfg.get("act", "none"), mask)
        dw = x.T @ dy
        db = dy.sum(axis=0)
        dx = dy @ params["w"].T
        return [dx], {"w": dw, "b": db}


class BatchNormKind(_Base):
    """Per-channel batch normalization with running statistics.

    Train mode normalizes by the batch mean/variance (biased) and updates the
    running stats with ``running = momentum * running + (1-momentum) * batch``;
    infer mode is the affine map through the running stats.  The epsilon guard
    keeps zero-variance channels finite.
    """

    @classmethod
    def validate(cls, spec):
        if spec.cfg.get("eps", BN_EPS) <= 0:
            raise GraphValidationError(f"batch_norm {spec.name!r}: eps must be > 0")

    @classmethod
    def out_shape(cls, spec, in_shapes):
        return in_shapes[0]

    @classmethod
    def init_params(cls, spec, in_shapes, rng):
        c = in_shapes[0][-1]
        return {"gamma": np.ones(c, dtype=np.float32),
                "beta": np.zeros(c, dtype=np.float32)}

    @classmethod
    def init_state(cls, spec, in_shapes):
        c = in_shapes[0][-1]
        return {"running_mean": np.zeros(c, dtype=np.float32),
                "running_var": np.ones(c, dtype=np.float32)}

    @classmethod
    def forward(cls, spec, xs, params, state, mode, rng):
        x = xs[0]
        eps = spec.cfg.get("eps", BN_EPS)
        momentum = spec.cfg.get("momentum", BN_MOMENTUM)
        axes = tuple(range(x.ndim - 1))
        gamma, beta = params["gamma"], params["beta"]
        if mode == "train":
            mu = x.mean(axis=axes)
            var = x.var(axis=axes)
            state["running_mean"][...] = momentum * state["running_mean"] + (1 - momentum) * mu
            state["running_var"][...] = momentum * state["running_var"] + (1 - momentum) * var
        else:
            mu, var = state["running_mean"], state["running_var"]
        ivar = 1.0 / np.sqrt(var + eps)
        xhat = (x - mu) * ivar
        y = gamma * xhat + beta
        y, mask = _apply_act(y, spec.cfg.get("act", "none"))
        m = int(np.prod([x.shape[a] for a in axes]))
        return y, (xhat.astype(x.dtype), ivar.astype(x.dtype), m, mode, mask)

    @classmethod
    def backward(cls, spec, dy, cache, params):
        xhat, ivar, m, mode, mask = cache
        dy = _act_bwd(dy, spec.cfg.get("act", "none"), mask)
        axes = tuple(range(dy.ndim - 1))
        gamma = params["gamma"]
        dgamma = (dy * xhat).sum(axis=axes)
        dbeta = dy.sum(axis=axes)
        if mode == "train":
            dx = (gamma * ivar / m) * (m * dy - dbeta - xhat * dgamma)
        else:
            dx = dy * gamma * ivar
        return [dx.astype(dy.dtype)], {"gamma": dgamma, "beta": dbeta}


class LRNKind(_Base):
    """AlexNet-style cross-channel local response normalization.

    ``y_c = x_c / (bias + alpha * sum_{|i-c| <= radius} x_i^2) ** beta``
    with no window-size rescaling of alpha.
    """

    @classmethod
    def validate(cls, spec):
        if spec.cfg.get("radius", LRN_RADIUS) < 1:
            raise GraphValidationError(f"lrn {spec.name!r}: radius must be >= 1")

    @classmethod
    def out_shape(cls, spec, in_shapes):
        return in_shapes[0]

    @staticmethod
    def _window_sum(v, radius):
        c = v.shape[-1]
        cs = np.cumsum(v, axis=-1, dtype=v.dtype)
        lo = np.clip(np.arange(c) - radius - 1, -1, c - 1)
        hi = np.clip(np.arange(c) + radius, 0, c - 1)
        total = np.take(cs, hi, axis=-1)
        mask = lo >= 0
        total[..., mask] -= np.take(cs, lo[mask], axis=-1)
        return total

    @classmethod
    def forward(cls, spec, xs, params, state, mode, rng):
        x = xs[0]
        cfg = spec.cfg
        radius = cfg.get("radius", LRN_RADIUS)
        alpha = cfg.get("alpha", LRN_ALPHA)
        beta = cfg.get("beta", LRN_BETA)
        bias = cfg.get("bias", LRN_BIAS)
        den = bias + alpha * cls._window_sum(x * x, radius)
        scale = den ** (-beta)
        y = x * scale
        return y, (x, y, den, scale)

    @classmethod
    def backward(cls, spec, dy, cache, params):
        x, y, den, scale = cache
        cfg = spec.cfg
        radius = cfg.get("radius", LRN_RADIUS)
        alpha = cfg.get("alpha", LRN_ALPHA)
        beta = cfg.get("beta", LRN_BETA)
        t = dy * y / den
        dx = dy * scale - (2.0 * alpha * beta) * x * cls._window_sum(t, radius)
        return [dx.astype(dy.dtype)], {}


class DropoutKind(_Base):
    @classmethod
    def validate(cls, spec):
        rate = spec.cfg.get("rate")
        if rate is None or not (0.0 < rate < 1.0):
            raise GraphValidationError(
                f"dropout {spec.name!r}: rate must be in (0,1), got {rate!r}")

    @classmethod
    def out_shape(cls, spec, in_shapes):
        return in_shapes[0]

    @classmethod
    def forward(cls, spec, xs, params, state, mode, rng):
        x = xs[0]
        if mode != "train":
            return x, None
        rate = spec.cfg["rate"]
        mask = (rng.random(x.shape) >= rate).astype(x.dtype) / np.asarray(1.0 - rate, x.dtype)
        return x * mask, mask

    @classmethod
    def backward(cls, spec, dy, cache, params):
        if cache is None:
            return [dy], {}
        return [dy * cache], {}


class MaxPoolKind(_Base):
    @classmethod
    def validate(cls, spec):
        if spec.cfg.get("window", 0) < 1 or spec.cfg.get("stride", 0) < 1:
            raise GraphValidationError(f"max_pool {spec.name!r}: window/stride must be >= 1")

    @classmethod
    def out_shape(cls, spec, in_shapes):
        (h, w, c), = in_shapes
        cfg = spec.cfg
        geom = ops.ConvGeometry(cfg["window"], cfg["window"], cfg["stride"],
                                cfg.get("padding", "valid"))
        oh, ow = geom.out_hw(h, w)
        return (oh, ow, c)

    @classmethod
    def forward(cls, spec, xs, params, state, mode, rng):
        cfg = spec.cfg
        return ops.max_pool_fwd(xs[0], cfg["window"], cfg["stride"],
                                cfg.get("padding", "valid"))

    @classmethod
    def backward(cls, spec, dy, cache, params):
        return [ops.max_pool_bwd(dy, cache)], {}


class AvgPoolKind(MaxPoolKind):
    @classmethod
    def forward(cls, spec, xs, params, state, mode, rng):
        cfg = spec.cfg
        return ops.avg_pool_fwd(xs[0], cfg["window"], cfg["stride"],
                                cfg.get("padding", "same"))

    @classmethod
    def backward(cls, spec, dy, cache, params):
        return [ops.avg_pool_bwd(dy, cache)], {}


class GlobalMaxPoolKind(_Base):
    @classmethod
    def out_shape(cls, spec, in_shapes):
        (shape,) = in_shapes
        if len(shape) != 3:
            raise GraphValidationError(
                f"global_max_pool {spec.name!r} expects spatial input, got {shape}")
        return (shape[2],)

    @classmethod
    def forward(cls, spec, xs, params, state, mode, rng):
        return ops.global_max_pool_fwd(xs[0])

    @classmethod
    def backward(cls, spec, dy, cache, params):
        return [ops.global_max_pool_bwd(dy, cache)], {}


class SoftmaxKind(_Base):
    @classmethod
    def out_shape(cls, spec, in_shapes):
        return in_shapes[0]

    @classmethod
    def forward(cls, spec, xs, params, state, mode, rng):
        y = softmax(xs[0])
        return y, y

    @classmethod
    def backward(cls, spec, dy, cache, params):
        y = cache
        dx = y * (dy - (dy * y).sum(axis=-1, keepdims=True))
        return [dx.astype(dy.dtype)], {}


class ConcatKind(_Base):
    min_inputs = 2
    max_inputs = None

    @classmethod
    def out_shape(cls, spec, in_shapes):
        ref = in_shapes[0]
        for i, s in enumerate(in_shapes):
            if len(s) != 3 or s[:2] != ref[:2]:
                raise GraphValidationError(
                    f"concat {spec.name!r}: branch {i} shape {s} does not match {ref}")
        return (ref[0], ref[1], sum(s[2] for s in in_shapes))

    @classmethod
    def forward(cls, spec, xs, params, state, mode, rng):
        return ops.concat_channels_fwd(xs)

    @classmethod
    def backward(cls, spec, dy, cache, params):
        return ops.concat_channels_bwd(dy, cache), {}


KINDS = {
    "input": InputKind,
    "conv": ConvKind,
    "dense": DenseKind,
    "batch_norm": BatchNormKind,
    "lrn": LRNKind,
    "dropout": DropoutKind,
    "max_pool": MaxPoolKind,
    "avg_pool": AvgPoolKind,
    "global_max_pool": GlobalMaxPoolKind,
    "softmax": SoftmaxKind,
    "concat": ConcatKind,
}


# ---------------------------------------------------------------------------
# standalone ops that tests and the trainer use directly


def batch_norm_forward(x, gamma, beta, running_stats, mode="train",
                       eps=BN_EPS, momentum=BN_MOMENTUM):
    """Functional batch norm; ``running_stats`` is updated in place in train mode."""
    spec = LayerSpec("bn", "batch_norm", {"eps": eps, "momentum": momentum, "act": "none"})
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise ShapeError(f"gamma/beta must have extent {x.shape[-1]}, got "
                         f"{tuple(gamma.shape)}/{tuple(beta.shape)}")
    y, _ = BatchNormKind.forward(spec, [x], {"gamma": gamma, "beta": beta},
                                 running_stats, mode, None)
    return y


def lrn_forward(x, radius=LRN_RADIUS, alpha=LRN_ALPHA, beta=LRN_BETA, bias=LRN_BIAS):
    spec = LayerSpec("lrn", "lrn", {"radius": radius, "alpha": alpha,
                                    "beta": beta, "bias": bias})
    y, _ = LRNKind.forward(spec, [x], {}, {}, "infer", None)
    return y


def dropout(x, p, mode="train", rng_seed=0):
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p)."""
    if not (0.0 < p < 1.0):
        raise ContractError(f"dropout rate must be in (0,1), got {p}")
    spec = LayerSpec("drop", "dropout", {"rate": p})
    rng = np.random.default_rng(rng_seed)
    y, _ = DropoutKind.forward(spec, [x], {}, {}, mode, rng)
    return y


def softmax(logits):
    """Row-wise stable softmax over the last axis."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels, smoothing: float = 0.0):
    """Mean cross entropy with optional label smoothing.

    Targets are ``q = (1 - smoothing) * labels + smoothing / K``.  The loss is
    evaluated in float64 for accuracy; the returned gradient
    ``(softmax(logits) - q) / N`` matches the logits dtype.
    """
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise ShapeError(f"logits must be [N,K] with K >= 2, got {tuple(logits.shape)}")
    if labels.shape != logits.shape:
        raise ShapeError(f"labels shape {tuple(labels.shape)} != logits {tuple(logits.shape)}")
    if smoothing < 0:
        raise ContractError(f"smoothing must be >= 0, got {smoothing}")
    row_sums = labels.sum(axis=1)
    if not np.allclose(row_sums, 1.0, atol=1e-3):
        raise ContractError("label rows must sum to 1")
    check_finite(logits, "loss logits")
    n, k = logits.shape
    z = logits.astype(np.float64)
    z -= z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    q = (1.0 - smoothing) * labels.astype(np.float64) + smoothing / k
    loss = float(-(q * logp).sum() / n)
    grad = ((np.exp(logp) - q) / n).astype(logits.dtype)
    return loss, grad
