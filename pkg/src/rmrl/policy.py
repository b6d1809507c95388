"""Factorized categorical policy: MLP trunk with three softmax heads over the
dx, dy and dpsi grids, plus analytic gradients of both training losses.

Parameters live in one flat float64 vector so that checkpoints, finite
differences and SGD all see the same layout: for every trunk layer then
every head, ``W`` (out x in, row-major) followed by ``b``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .env import ActionIndex, Observation

_ACTIVATIONS = {
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, a: (z > 0).astype(z.dtype)),
}


@dataclass(frozen=True)
class PolicyArchitecture:
    input_dim: int
    hidden_dims: tuple[int, ...]
    head_sizes: tuple[int, int, int]
    activation: str = "tanh"
    # est_pose components are divided by these before entering the network
    pose_scale: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        object.__setattr__(self, "head_sizes", tuple(int(h) for h in self.head_sizes))
        object.__setattr__(self, "pose_scale", tuple(float(s) for s in self.pose_scale))
        if self.input_dim < 4:
            raise ValueError("input_dim must cover the 3 pose components and at least one feature")
        if len(self.head_sizes) != 3 or min(self.head_sizes) < 1 or min(self.hidden_dims, default=1) < 1:
            raise ValueError(f"invalid architecture dims: {self}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if any(s <= 0 for s in self.pose_scale):
            raise ValueError("pose_scale entries must be positive")

    @property
    def feature_dim(self) -> int:
        return self.input_dim - 3

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(out, in) of each trunk layer followed by the three heads."""
        dims = (self.input_dim,) + self.hidden_dims
        shapes = [(dims[i + 1], dims[i]) for i in range(len(self.hidden_dims))]
        shapes += [(n, dims[-1]) for n in self.head_sizes]
        return shapes

    @property
    def n_params(self) -> int:
        return sum(o * i + o for o, i in self.layer_shapes())

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_dims": list(self.hidden_dims),
            "head_sizes": list(self.head_sizes),
            "activation": self.activation,
            "pose_scale": list(self.pose_scale),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyArchitecture":
        return cls(
            input_dim=int(d["input_dim"]),
            hidden_dims=tuple(d["hidden_dims"]),
            head_sizes=tuple(d["head_sizes"]),
            activation=d["activation"],
            pose_scale=tuple(d.get("pose_scale", (1.0, 1.0, 1.0))),
        )


@dataclass(frozen=True, eq=False)
class PolicyParams:
    vector: np.ndarray
    arch: PolicyArchitecture

    def __post_init__(self):
        v = np.array(self.vector, dtype=np.float64, copy=True).reshape(-1)
        if v.size != self.arch.n_params:
            raise ValueError(f"expected {self.arch.n_params} parameters, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("parameters must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        out, pos = [], 0
        for o, i in self.arch.layer_shapes():
            W = self.vector[pos:pos + o * i].reshape(o, i)
            pos += o * i
            b = self.vector[pos:pos + o]
            pos += o
            out.append((W, b))
        return out


def init_params(
    arch: PolicyArchitecture, rng: np.random.Generator, scale: float = 0.05, trunk: str = "uniform"
) -> PolicyParams:
    """Random initial parameters.

    ``trunk="uniform"`` draws every entry from U(-scale, scale). With
    ``trunk="glorot"`` trunk weights use U(-sqrt(6/(fan_in+fan_out)), ...) and
    zero biases, while the heads keep U(-scale, scale) so initial logits stay
    near zero either way.
    """
    if trunk == "uniform":
        return PolicyParams(rng.uniform(-scale, scale, size=arch.n_params), arch)
    if trunk != "glorot":
        raise ValueError(f"unknown trunk init {trunk!r}")
    n_hidden = len(arch.hidden_dims)
    parts = []
    for k, (o, i) in enumerate(arch.layer_shapes()):
        if k < n_hidden:
            lim = np.sqrt(6.0 / (o + i))
            parts += [rng.uniform(-lim, lim, size=o * i), np.zeros(o)]
        else:
            parts += [rng.uniform(-scale, scale, size=o * i), rng.uniform(-scale, scale, size=o)]
    return PolicyParams(np.concatenate(parts), arch)


def zero_params(arch: PolicyArchitecture) -> PolicyParams:
    return PolicyParams(np.zeros(arch.n_params), arch)


@dataclass(frozen=True)
class ActionDistribution:
    probs: tuple[np.ndarray, np.ndarray, np.ndarray]
    log_probs: tuple[np.ndarray, np.ndarray, np.ndarray] = field(repr=False)

    def argmax(self) -> ActionIndex:
        return tuple(int(np.argmax(p)) for p in self.probs)


def encode(obs: Observation, arch: PolicyArchitecture) -> np.ndarray:
    if obs.feature.shape[0] != arch.feature_dim:
        raise ValueError(
            f"observation feature has dimension {obs.feature.shape[0]}, "
            f"architecture expects {arch.feature_dim}"
        )
    pose = obs.est_pose.as_array() / np.asarray(arch.pose_scale)
    return np.concatenate([pose, obs.feature])


def encode_batch(observations, arch: PolicyArchitecture) -> np.ndarray:
    return np.stack([encode(o, arch) for o in observations])


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _forward(params: PolicyParams, X: np.ndarray):
    """Batched forward pass; returns per-head log-probs and the activation cache."""
    act, _ = _ACTIVATIONS[params.arch.activation]
    layers = params.layers()
    n_hidden = len(params.arch.hidden_dims)
    h = X
    cache = [(X, None)]
    for W, b in layers[:n_hidden]:
        z = h @ W.T + b
        h = act(z)
        cache.append((h, z))
    logps = [log_softmax(h @ W.T + b) for W, b in layers[n_hidden:]]
    return logps, cache


def _backward(params: PolicyParams, cache, dlogits) -> np.ndarray:
    """Gradient of a loss w.r.t. the flat parameter vector given dL/dlogits per head."""
    _, dact = _ACTIVATIONS[params.arch.activation]
    layers = params.layers()
    n_hidden = len(params.arch.hidden_dims)
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(layers)
    h_top = cache[-1][0]
    dh = np.zeros_like(h_top)
    for k, g in enumerate(dlogits):
        W, _ = layers[n_hidden + k]
        grads[n_hidden + k] = (g.T @ h_top, g.sum(axis=0))
        dh += g @ W
    for layer in range(n_hidden - 1, -1, -1):
        h, z = cache[layer + 1]
        dz = dh * dact(z, h)
        h_in = cache[layer][0]
        grads[layer] = (dz.T @ h_in, dz.sum(axis=0))
        if layer > 0:
            dh = dz @ layers[layer][0]
    return np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in grads])


def forward(params: PolicyParams, obs: Observation) -> ActionDistribution:
    logps, _ = _forward(params, encode(obs, params.arch)[None, :])
    logps = tuple(lp[0] for lp in logps)
    return ActionDistribution(tuple(np.exp(lp) for lp in logps), logps)


def sample(dist: ActionDistribution, rng: np.random.Generator) -> ActionIndex:
    """Draw each component independently by inverse-CDF on one uniform."""
    out = []
    for p in dist.probs:
        cdf = np.cumsum(p)
        idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        out.append(min(idx, len(p) - 1))
    return tuple(out)


def log_prob(dist: ActionDistribution, a: ActionIndex) -> float:
    return float(sum(lp[i] for lp, i in zip(dist.log_probs, a)))


def _onehots(indices: np.ndarray, sizes) -> list[np.ndarray]:
    out = []
    for k, n in enumerate(sizes):
        oh = np.zeros((indices.shape[0], n))
        oh[np.arange(indices.shape[0]), indices[:, k]] = 1.0
        out.append(oh)
    return out


def _check_indices(actions: np.ndarray, sizes):
    if actions.ndim != 2 or actions.shape[1] != 3:
        raise ValueError("actions must be (batch, 3) index triples")
    if np.any(actions < 0) or np.any(actions >= np.asarray(sizes)):
        raise IndexError(f"action indices outside head sizes {sizes}")


def batch_pg_gradient(params: PolicyParams, X: np.ndarray, actions, rewards) -> tuple[float, np.ndarray]:
    """Mean surrogate loss -log pi(a|s) * R over a batch and its gradient."""
    actions = np.asarray(actions, dtype=np.int64).reshape(-1, 3)
    rewards = np.asarray(rewards, dtype=np.float64).reshape(-1)
    sizes = params.arch.head_sizes
    _check_indices(actions, sizes)
    if not np.all(np.isfinite(rewards)):
        raise ValueError("rewards must be finite")
    logps, cache = _forward(params, X)
    onehots = _onehots(actions, sizes)
    n = X.shape[0]
    logpi = sum((lp * oh).sum(axis=1) for lp, oh in zip(logps, onehots))
    loss = float(-(logpi * rewards).mean())
    scale = (rewards / n)[:, None]
    dlogits = [scale * (np.exp(lp) - oh) for lp, oh in zip(logps, onehots)]
    return loss, _backward(params, cache, dlogits)


def batch_ce_gradient(params: PolicyParams, X: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean one-hot cross-entropy summed over the three heads, and its gradient."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1, 3)
    sizes = params.arch.head_sizes
    _check_indices(labels, sizes)
    logps, cache = _forward(params, X)
    onehots = _onehots(labels, sizes)
    n = X.shape[0]
    loss = float(-sum((lp * oh).sum() for lp, oh in zip(logps, onehots)) / n)
    dlogits = [(np.exp(lp) - oh) / n for lp, oh in zip(logps, onehots)]
    return loss, _backward(params, cache, dlogits)


def pg_gradient(params: PolicyParams, obs: Observation, a: ActionIndex, reward: float) -> np.ndarray:
    return batch_pg_gradient(params, encode(obs, params.arch)[None, :], [a], [reward])[1]


def ce_gradient(params: PolicyParams, obs: Observation, label: ActionIndex) -> tuple[float, np.ndarray]:
    return batch_ce_gradient(params, encode(obs, params.arch)[None, :], [label])


def apply_update(params: PolicyParams, gradient: np.ndarray, learning_rate: float) -> PolicyParams:
    gradient = np.asarray(gradient, dtype=np.float64)
    if gradient.shape != params.vector.shape:
        raise ValueError(f"gradient shape {gradient.shape} != params shape {params.vector.shape}")
    if not np.all(np.isfinite(gradient)):
        raise ValueError("gradient contains non-finite entries")
    if learning_rate == 0:
        return params
    return PolicyParams(params.vector - learning_rate * gradient, params.arch)
