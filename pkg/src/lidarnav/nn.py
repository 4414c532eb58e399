"""Hand-rolled actor-critic network in plain numpy.

Architecture: optional LSTM cell feeding an ELU MLP, with a tanh-squashed
action-mean head, a linear value head, and a state-independent trainable
log standard deviation.  Forward passes cache every intermediate so the
matching backward pass can produce exact reverse-mode gradients for any
scalar loss expressed through gradients on (mean, value, logstd); the
backward is checked against central finite differences in the tests.

All ops are functional: weights and optimizer state are never mutated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

LOGSTD_MIN = -5.0
LOGSTD_MAX = 1.0

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_HALF_LOG_2PIE = 0.5 * (1.0 + math.log(2.0 * math.pi))


class ShapeMismatchError(ValueError):
    """Tensor shapes do not match the declared network shape."""


class NonFiniteLossError(RuntimeError):
    """A training loss or gradient went NaN/inf."""


@dataclass(frozen=True)
class NetworkShape:
    input_dim: int = 124
    hidden: tuple[int, ...] = (256, 128, 64)
    recurrent: bool = False
    recurrent_units: int = 128
    action_dim: int = 2


@dataclass(frozen=True)
class HiddenState:
    """LSTM carry; kept as zeros for non-recurrent networks."""

    h: np.ndarray
    c: np.ndarray

    @staticmethod
    def zeros(units: int, batch: int | None = None,
              dtype=np.float64) -> "HiddenState":
        shape = (units,) if batch is None else (batch, units)
        return HiddenState(np.zeros(shape, dtype=dtype), np.zeros(shape, dtype=dtype))


def tensor_spec(shape: NetworkShape) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) list for every trainable tensor."""
    spec: list[tuple[str, tuple[int, ...]]] = []
    mlp_in = shape.input_dim
    if shape.recurrent:
        u = shape.recurrent_units
        spec += [("lstm.Wx", (shape.input_dim, 4 * u)),
                 ("lstm.Wh", (u, 4 * u)),
                 ("lstm.b", (4 * u,))]
        mlp_in = u
    prev = mlp_in
    for i, width in enumerate(shape.hidden):
        spec += [(f"layers.{i}.W", (prev, width)), (f"layers.{i}.b", (width,))]
        prev = width
    spec += [("mean_head.W", (prev, shape.action_dim)),
             ("mean_head.b", (shape.action_dim,)),
             ("value_head.W", (prev, 1)),
             ("value_head.b", (1,)),
             ("logstd", (shape.action_dim,))]
    return spec


class PolicyWeights:
    """All trainable tensors, keyed by name in a stable order."""

    def __init__(self, shape: NetworkShape, tensors: dict[str, np.ndarray]):
        expected = tensor_spec(shape)
        if [n for n, _ in expected] != list(tensors):
            raise ShapeMismatchError("tensor names do not match the network shape")
        for name, tshape in expected:
            if tuple(tensors[name].shape) != tshape:
                raise ShapeMismatchError(
                    f"{name}: expected shape {tshape}, got {tensors[name].shape}")
        self.shape = shape
        self.tensors = tensors

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def copy(self) -> "PolicyWeights":
        return PolicyWeights(self.shape, {k: v.copy() for k, v in self.tensors.items()})

    def astype(self, dtype) -> "PolicyWeights":
        return PolicyWeights(self.shape,
                             {k: v.astype(dtype) for k, v in self.tensors.items()})


def _orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float,
                dtype) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return (gain * q[:rows, :cols]).astype(dtype)


def init_weights(shape: NetworkShape, rng: np.random.Generator,
                 dtype=np.float64) -> PolicyWeights:
    """Orthogonal init: gain sqrt(2) on the ELU stack, 1.0 on the LSTM and
    value head, 0.01 on the action head.  Biases and logstd start at 0."""
    tensors: dict[str, np.ndarray] = {}
    for name, tshape in tensor_spec(shape):
        if name.endswith(".b") or name == "logstd":
            tensors[name] = np.zeros(tshape, dtype=dtype)
        elif name.startswith("lstm."):
            tensors[name] = _orthogonal(rng, *tshape, gain=1.0, dtype=dtype)
        elif name.startswith("layers."):
            tensors[name] = _orthogonal(rng, *tshape, gain=math.sqrt(2.0), dtype=dtype)
        elif name == "mean_head.W":
            tensors[name] = _orthogonal(rng, *tshape, gain=0.01, dtype=dtype)
        else:  # value head
            tensors[name] = _orthogonal(rng, *tshape, gain=1.0, dtype=dtype)
    return PolicyWeights(shape, tensors)


def _elu(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0.0, z, np.expm1(z))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(weights: PolicyWeights, obs: np.ndarray,
            hidden: HiddenState | None = None):
    """One policy evaluation.

    obs may be a single observation (D,) or a batch (B, D).  Returns
    (mean, value, hidden', cache); mean is tanh-squashed into (-1, 1).
    For non-recurrent networks the hidden state passes through untouched.
    """
    shape = weights.shape
    single = obs.ndim == 1
    x = np.atleast_2d(np.asarray(obs))
    if x.shape[1] != shape.input_dim:
        raise ShapeMismatchError(
            f"expected observations of dim {shape.input_dim}, got {x.shape[1]}")
    b = x.shape[0]
    dtype = weights["mean_head.W"].dtype
    cache: dict = {"single": single}

    if shape.recurrent:
        u = shape.recurrent_units
        if hidden is None:
            hidden = HiddenState.zeros(u, b, dtype)
        h_prev = np.atleast_2d(hidden.h)
        c_prev = np.atleast_2d(hidden.c)
        z = x @ weights["lstm.Wx"] + h_prev @ weights["lstm.Wh"] + weights["lstm.b"]
        gi = _sigmoid(z[:, :u])
        gf = _sigmoid(z[:, u:2 * u])
        gg = np.tanh(z[:, 2 * u:3 * u])
        go = _sigmoid(z[:, 3 * u:])
        c = gf * c_prev + gi * gg
        tc = np.tanh(c)
        h = go * tc
        cache.update(x=x, h_prev=h_prev, c_prev=c_prev, gi=gi, gf=gf, gg=gg,
                     go=go, tanh_c=tc)
        feat = h
        hidden_out = HiddenState(h[0] if single else h, c[0] if single else c)
    else:
        if hidden is None:
            hidden = HiddenState.zeros(shape.recurrent_units, b, dtype)
        cache.update(x=x)
        feat = x
        hidden_out = hidden

    acts = [feat]
    zs = []
    a = feat
    for i in range(len(shape.hidden)):
        z = a @ weights[f"layers.{i}.W"] + weights[f"layers.{i}.b"]
        a = _elu(z)
        zs.append(z)
        acts.append(a)
    mean = np.tanh(a @ weights["mean_head.W"] + weights["mean_head.b"])
    value = (a @ weights["value_head.W"] + weights["value_head.b"])[:, 0]
    cache.update(acts=acts, zs=zs, mean=mean)
    if single:
        return mean[0], float(value[0]), hidden_out, cache
    return mean, value, hidden_out, cache


def zero_grads(weights: PolicyWeights) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(t) for name, t in weights.tensors.items()}


def backward(weights: PolicyWeights, cache: dict, grad_mean: np.ndarray,
             grad_value: np.ndarray, grad_h: np.ndarray | None = None,
             grad_c: np.ndarray | None = None,
             grads: dict[str, np.ndarray] | None = None):
    """Exact reverse pass for one forward call.

    grad_mean / grad_value are the loss gradients on the squashed mean and
    the value (batch leading dim matching the forward).  grad_h / grad_c
    inject gradient arriving at this step's hidden output from later
    timesteps.  Parameter gradients accumulate into ``grads`` (created when
    not given); gradients w.r.t. the incoming hidden state are returned for
    chaining through an unroll.  logstd receives no gradient here since the
    network output does not depend on it; callers add their own term.
    """
    shape = weights.shape
    if grads is None:
        grads = zero_grads(weights)
    gm = np.atleast_2d(np.asarray(grad_mean))
    gv = np.asarray(grad_value).reshape(-1, 1)

    acts, zs, mean = cache["acts"], cache["zs"], cache["mean"]
    a_last = acts[-1]
    d_meanpre = gm * (1.0 - mean ** 2)
    grads["mean_head.W"] += a_last.T @ d_meanpre
    grads["mean_head.b"] += d_meanpre.sum(axis=0)
    grads["value_head.W"] += a_last.T @ gv
    grads["value_head.b"] += gv.sum(axis=0)
    da = d_meanpre @ weights["mean_head.W"].T + gv @ weights["value_head.W"].T

    for i in reversed(range(len(shape.hidden))):
        z = zs[i]
        # ELU': 1 above zero, exp(z) = elu(z) + 1 below.
        dz = da * np.where(z > 0.0, 1.0, acts[i + 1] + 1.0)
        grads[f"layers.{i}.W"] += acts[i].T @ dz
        grads[f"layers.{i}.b"] += dz.sum(axis=0)
        da = dz @ weights[f"layers.{i}.W"].T

    if not shape.recurrent:
        return grads, None, None

    dh = da
    if grad_h is not None:
        dh = dh + np.atleast_2d(grad_h)
    gi, gf, gg, go = cache["gi"], cache["gf"], cache["gg"], cache["go"]
    tc, c_prev = cache["tanh_c"], cache["c_prev"]
    d_go = dh * tc
    dc = dh * go * (1.0 - tc ** 2)
    if grad_c is not None:
        dc = dc + np.atleast_2d(grad_c)
    d_gi = dc * gg
    d_gf = dc * c_prev
    d_gg = dc * gi
    dc_prev = dc * gf
    dz = np.concatenate([d_gi * gi * (1.0 - gi),
                         d_gf * gf * (1.0 - gf),
                         d_gg * (1.0 - gg ** 2),
                         d_go * go * (1.0 - go)], axis=1)
    grads["lstm.Wx"] += cache["x"].T @ dz
    grads["lstm.Wh"] += cache["h_prev"].T @ dz
    grads["lstm.b"] += dz.sum(axis=0)
    dh_prev = dz @ weights["lstm.Wh"].T
    return grads, dh_prev, dc_prev


def forward_sequence(weights: PolicyWeights, obs_seq: np.ndarray,
                     hidden: HiddenState | None = None,
                     reset_mask: np.ndarray | None = None):
    """Run T consecutive steps on a (T, B, D) batch of unrolls.

    reset_mask (T, B) zeroes the carried hidden state before the steps that
    begin a new episode.  Returns (means, values, final hidden, caches).
    """
    t_len, b = obs_seq.shape[0], obs_seq.shape[1]
    dtype = weights["mean_head.W"].dtype
    if hidden is None:
        hidden = HiddenState.zeros(weights.shape.recurrent_units, b, dtype)
    means = np.empty((t_len, b, weights.shape.action_dim), dtype=dtype)
    values = np.empty((t_len, b), dtype=dtype)
    caches = []
    for t in range(t_len):
        if reset_mask is not None:
            keep = ~reset_mask[t]
            hidden = HiddenState(hidden.h * keep[:, None], hidden.c * keep[:, None])
        mean, value, hidden, cache = forward(weights, obs_seq[t], hidden)
        means[t] = mean
        values[t] = value
        caches.append(cache)
    return means, values, hidden, caches


def backward_sequence(weights: PolicyWeights, caches: list, grad_means: np.ndarray,
                      grad_values: np.ndarray,
                      reset_mask: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """Backpropagate through a forward_sequence unroll (truncated BPTT)."""
    grads = zero_grads(weights)
    dh = dc = None
    for t in reversed(range(len(caches))):
        grads, dh, dc = backward(weights, caches[t], grad_means[t],
                                 grad_values[t], grad_h=dh, grad_c=dc,
                                 grads=grads)
        if dh is not None and reset_mask is not None:
            keep = ~reset_mask[t]
            dh = dh * keep[:, None]
            dc = dc * keep[:, None]
    return grads


def gaussian_logprob_entropy(mean: np.ndarray, logstd: np.ndarray,
                             action: np.ndarray):
    """Diagonal Gaussian log-density of ``action`` and policy entropy.

    Returns (logprob, entropy): logprob has the batch shape of the inputs,
    entropy is a scalar since the std does not depend on state.
    """
    mean = np.asarray(mean)
    action = np.asarray(action)
    inv_var = np.exp(-2.0 * logstd)
    quad = 0.5 * ((action - mean) ** 2) * inv_var
    logprob = -(quad + logstd + _HALF_LOG_2PI).sum(axis=-1)
    entropy = float((logstd + _HALF_LOG_2PIE).sum())
    return logprob, entropy


@dataclass(frozen=True)
class OptState:
    """Adam moments with bias correction; step counts completed updates."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_opt_state(weights: PolicyWeights, lr: float) -> OptState:
    return OptState(m=zero_grads(weights), v=zero_grads(weights), step=0, lr=lr)


def adam_step(weights: PolicyWeights, grads: dict[str, np.ndarray],
              opt: OptState) -> tuple[PolicyWeights, OptState]:
    """One Adam update; functional (returns new weights and state)."""
    t = opt.step + 1
    c1 = 1.0 - opt.beta1 ** t
    c2 = 1.0 - opt.beta2 ** t
    new_w: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for name, w in weights.tensors.items():
        g = grads[name]
        m = opt.beta1 * opt.m[name] + (1.0 - opt.beta1) * g
        v = opt.beta2 * opt.v[name] + (1.0 - opt.beta2) * (g * g)
        new_m[name] = m
        new_v[name] = v
        new_w[name] = w - opt.lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)
    return (PolicyWeights(weights.shape, new_w),
            replace(opt, m=new_m, v=new_v, step=t))


def clamp_logstd(weights: PolicyWeights, lo: float = LOGSTD_MIN,
                 hi: float = LOGSTD_MAX) -> PolicyWeights:
    """Project logstd back into its trust range after an update."""
    tensors = dict(weights.tensors)
    tensors["logstd"] = np.clip(tensors["logstd"], lo, hi)
    return PolicyWeights(weights.shape, tensors)


def global_grad_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float((g * g).sum()) for g in grads.values()))


def clip_grads(grads: dict[str, np.ndarray], max_norm: float) -> tuple[dict, float]:
    """Scale all gradients so the global norm is at most max_norm."""
    norm = global_grad_norm(grads)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        grads = {name: g * scale for name, g in grads.items()}
    return grads, norm
