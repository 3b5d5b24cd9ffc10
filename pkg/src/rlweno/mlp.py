"""Feed-forward networks with hand-written forward and backward passes.

The actor maps a 7-real interface state to 4 logits, softmaxed onto the
weight simplex; a cell action applies the same subnet to both of its
interface states.  The critic maps (14-real cell state, 8-real action) to a
scalar value.  Everything is float64 numpy; gradients are exact reverse-mode
and are checked against central finite differences in the tests.
"""

import json
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

ACTOR_SIZES = [7, 64, 64, 64, 64, 64, 64, 4]
CRITIC_SIZES = [22, 64, 64, 64, 64, 64, 64, 1]
CHECKPOINT_VERSION = 1


@dataclass
class MlpParams:
    """Per-layer weight matrices (n_in, n_out) and bias vectors."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]

    @property
    def layer_sizes(self) -> List[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class GradientSet:
    """Parameter gradients, shape-congruent with an MlpParams."""

    d_weights: List[np.ndarray]
    d_biases: List[np.ndarray]

    @staticmethod
    def zeros_like(params: MlpParams) -> "GradientSet":
        return GradientSet([np.zeros_like(w) for w in params.weights],
                           [np.zeros_like(b) for b in params.biases])

    def add_(self, other: "GradientSet", scale: float = 1.0) -> "GradientSet":
        for dw, ow in zip(self.d_weights, other.d_weights):
            dw += scale * ow
        for db, ob in zip(self.d_biases, other.d_biases):
            db += scale * ob
        return self

    def scale_(self, s: float) -> "GradientSet":
        for dw in self.d_weights:
            dw *= s
        for db in self.d_biases:
            db *= s
        return self


@dataclass
class ForwardCache:
    """Activations retained for the backward pass."""

    x: np.ndarray
    pre_acts: List[np.ndarray] = field(default_factory=list)
    acts: List[np.ndarray] = field(default_factory=list)


def init_params(rng_seed, layer_sizes: Sequence[int]) -> MlpParams:
    """Xavier-uniform weights, zero biases, deterministic per seed."""
    if len(layer_sizes) < 2:
        raise ValueError("layer_sizes needs at least input and output")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    weights, biases = [], []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (n_in + n_out))
        weights.append(rng.uniform(-limit, limit, (n_in, n_out)))
        biases.append(np.zeros(n_out))
    return MlpParams(weights, biases)


def forward(params: MlpParams, x: np.ndarray) -> tuple:
    """Affine + ReLU layers, final layer affine.  Accepts (B, n_in) or
    (n_in,); the output matches the input's batch shape."""
    single = np.ndim(x) == 1
    h = np.atleast_2d(np.asarray(x, dtype=float))
    if h.shape[1] != params.weights[0].shape[0]:
        raise ValueError(f"input width {h.shape[1]} != layer width {params.weights[0].shape[0]}")
    cache = ForwardCache(x=h)
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        cache.pre_acts.append(z)
        h = z if i == last else np.maximum(z, 0.0)
        cache.acts.append(h)
    return (h[0] if single else h), cache


def backward(params: MlpParams, cache: ForwardCache, grad_out: np.ndarray) -> tuple:
    """Exact reverse-mode gradients; returns (GradientSet, grad wrt input).
    Batched output gradients are summed into the parameter gradients."""
    g = np.atleast_2d(np.asarray(grad_out, dtype=float))
    if g.shape != cache.pre_acts[-1].shape:
        raise ValueError("output gradient shape mismatch with cached forward")
    d_weights = [None] * len(params.weights)
    d_biases = [None] * len(params.biases)
    for i in range(len(params.weights) - 1, -1, -1):
        if i != len(params.weights) - 1:
            g = g * (cache.pre_acts[i] > 0.0)
        inp = cache.x if i == 0 else cache.acts[i - 1]
        d_weights[i] = inp.T @ g
        d_biases[i] = g.sum(axis=0)
        g = g @ params.weights[i].T
    grad_in = g[0] if np.ndim(grad_out) == 1 else g
    return GradientSet(d_weights, d_biases), grad_in


def softmax_head(logits: np.ndarray) -> np.ndarray:
    """Stable softmax over the last axis; strictly positive, sums to 1."""
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(weights: np.ndarray, grad_w: np.ndarray) -> np.ndarray:
    """Gradient wrt logits given softmax outputs and gradient wrt outputs."""
    dot = (grad_w * weights).sum(axis=-1, keepdims=True)
    return weights * (grad_w - dot)


def actor_logits(params: MlpParams, states: np.ndarray) -> tuple:
    """(B, 4) logits for (B, 7) interface states, with cache."""
    return forward(params, states)


def actor_act(params: MlpParams, cell_state: np.ndarray) -> np.ndarray:
    """8 simplex weights for a 14-real cell state: the shared subnet runs on
    each interface half and each 4-block is softmaxed."""
    single = np.ndim(cell_state) == 1
    s = np.atleast_2d(np.asarray(cell_state, dtype=float))
    halves = s.reshape(-1, 7)  # (2B, 7): left then right per row
    logits, _ = forward(params, halves)
    w = softmax_head(logits).reshape(-1, 8)
    return w[0] if single else w


class ActorPolicy:
    """Rollout-facing wrapper: interface states -> simplex weights, with
    optional exploration noise on the logits."""

    def __init__(self, params: MlpParams):
        self.params = params

    def weights(self, states: np.ndarray, rng=None, noise_std: float = 0.0) -> np.ndarray:
        logits, _ = forward(self.params, states)
        if noise_std > 0.0 and rng is not None:
            logits = logits + rng.normal(0.0, noise_std, logits.shape)
        return softmax_head(logits)


def save_checkpoint(path: str, params: MlpParams, rng_seed: int = 0,
                    train_step: int = 0, method: str = "rl", extra: dict = None) -> None:
    blob = {
        "format_version": CHECKPOINT_VERSION,
        "method": method,
        "layer_sizes": params.layer_sizes,
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
        "rng_seed": int(rng_seed),
        "train_step": int(train_step),
    }
    if extra:
        blob.update(extra)
    with open(path, "w") as fh:
        json.dump(blob, fh)


def load_checkpoint(path: str) -> tuple:
    """Returns (MlpParams, metadata dict)."""
    with open(path) as fh:
        blob = json.load(fh)
    if blob.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {blob.get('format_version')!r}")
    params = MlpParams([np.asarray(w, dtype=float) for w in blob["weights"]],
                       [np.asarray(b, dtype=float) for b in blob["biases"]])
    meta = {k: v for k, v in blob.items() if k not in ("weights", "biases")}
    return params, meta
