"""Feed-forward policy and value networks with hand-written gradients.

Three head kinds: a 3-way categorical for the discrete action space, a
diagonal 2D Gaussian (steer, speed) whose mean is tanh-bounded in (-1, 1)
and whose standard deviation is sigmoid-mapped into (0.2, 0.6), and a scalar
value head. Forward passes cache activations; backward() turns a gradient on
the raw head outputs into exact parameter gradients, which is all the
gradient machinery the trainer needs.

Both bounded-head mappings are squeezed by a 1e-6 margin so outputs stay
strictly inside their open intervals even when the pre-activations saturate
in floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .simulator import Action, ContinuousAction, DiscreteAction

HEAD_DIMS = {"categorical": 3, "gaussian2d": 4, "value": 1}

MU_MARGIN = 1e-6
SIGMA_MARGIN = 1e-6
SIGMA_LO, SIGMA_SPAN = 0.2, 0.4

LOG_TAU = math.log(2.0 * math.pi)


@dataclass
class NetParams:
    """MLP parameters: weights[i] has shape (fan_in, fan_out)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "tanh"
    head: str = "value"

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def copy(self) -> "NetParams":
        return NetParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            activation=self.activation,
            head=self.head,
        )

    def allclose(self, other: "NetParams") -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights)) and all(
            np.array_equal(a, b) for a, b in zip(self.biases, other.biases)
        )


def _orthogonal(rows: int, cols: int, gain: float, rng: np.random.Generator) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    # canonical C layout: matmul results must not depend on whether a matrix
    # was built here or round-tripped through a copy or a checkpoint
    return np.ascontiguousarray(gain * q[:rows, :cols])


def init_params(
    in_dim: int,
    hidden: tuple[int, ...],
    head: str,
    rng: np.random.Generator,
    activation: str = "tanh",
    out_scale: float = 0.01,
) -> NetParams:
    """Orthogonally initialized network; the output layer is scaled down by
    out_scale so fresh policies start near-uniform."""
    if head not in HEAD_DIMS:
        raise ValueError(f"unknown head {head!r}")
    dims = (in_dim, *hidden, HEAD_DIMS[head])
    weights, biases = [], []
    for i, (n_in, n_out) in enumerate(zip(dims[:-1], dims[1:])):
        gain = out_scale if i == len(dims) - 2 else math.sqrt(2.0)
        weights.append(_orthogonal(n_in, n_out, gain, rng))
        biases.append(np.zeros(n_out))
    return NetParams(weights=weights, biases=biases, activation=activation, head=head)


_ACT = {
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, a: (z > 0.0).astype(float)),
    "identity": (lambda z: z, lambda z, a: np.ones_like(z)),
}


@dataclass
class ForwardCache:
    inputs: list[np.ndarray] = field(default_factory=list)  # input to each layer
    pres: list[np.ndarray] = field(default_factory=list)  # hidden pre-activations
    acts: list[np.ndarray] = field(default_factory=list)  # hidden activations


def forward_raw(params: NetParams, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Run the MLP on a batch (N, in_dim); returns raw head outputs (N, out_dim)."""
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise ValueError(f"expected input of shape (N, {params.in_dim}), got {x.shape}")
    act_fn, _ = _ACT[params.activation]
    cache = ForwardCache()
    h = x
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        cache.inputs.append(h)
        z = h @ w + b
        cache.pres.append(z)
        h = act_fn(z)
        cache.acts.append(h)
    cache.inputs.append(h)
    return h @ params.weights[-1] + params.biases[-1], cache


def backward(
    params: NetParams, cache: ForwardCache, d_out: np.ndarray
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Backpropagate d(loss)/d(raw output) into per-layer (dW, db) sums."""
    _, act_deriv = _ACT[params.activation]
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(params.weights)  # type: ignore
    d = d_out
    for i in range(len(params.weights) - 1, -1, -1):
        grads[i] = (cache.inputs[i].T @ d, d.sum(axis=0))
        if i > 0:
            d = (d @ params.weights[i].T) * act_deriv(cache.pres[i - 1], cache.acts[i - 1])
    return grads


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def gaussian_head(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map raw (N, 4) outputs to (mu, sigma), each (N, 2), strictly inside
    (-1, 1) and (0.2, 0.6)."""
    mu = (1.0 - MU_MARGIN) * np.tanh(z[..., :2])
    u = SIGMA_MARGIN + (1.0 - 2.0 * SIGMA_MARGIN) * sigmoid(z[..., 2:])
    return mu, SIGMA_LO + SIGMA_SPAN * u


def gaussian_head_derivs(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """d(mu)/dz and d(sigma)/dz at the raw outputs, each (N, 2)."""
    th = np.tanh(z[..., :2])
    dmu = (1.0 - MU_MARGIN) * (1.0 - th * th)
    s = sigmoid(z[..., 2:])
    dsigma = SIGMA_SPAN * (1.0 - 2.0 * SIGMA_MARGIN) * s * (1.0 - s)
    return dmu, dsigma


@dataclass(frozen=True)
class CategoricalDist:
    probs: np.ndarray  # (3,)


@dataclass(frozen=True)
class GaussianDist:
    mu: np.ndarray  # (2,)
    sigma: np.ndarray  # (2,)


ActionDistribution = CategoricalDist | GaussianDist


def forward_policy(params: NetParams, obs: np.ndarray) -> ActionDistribution:
    """Evaluate the policy head on a single observation."""
    z, _ = forward_raw(params, obs[None, :])
    if params.head == "categorical":
        return CategoricalDist(probs=softmax(z[0]))
    if params.head == "gaussian2d":
        mu, sigma = gaussian_head(z)
        return GaussianDist(mu=mu[0], sigma=sigma[0])
    raise ValueError(f"params with head {params.head!r} is not a policy network")


def forward_value(params: NetParams, obs: np.ndarray) -> float:
    if params.head != "value":
        raise ValueError(f"params with head {params.head!r} is not a value network")
    z, _ = forward_raw(params, obs[None, :])
    return float(z[0, 0])


def gaussian_logprob(mu: np.ndarray, sigma: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Diagonal-Gaussian log density, summed over the action dimensions."""
    q = (x - mu) / sigma
    return -(np.log(sigma) + 0.5 * q * q).sum(axis=-1) - LOG_TAU


def categorical_entropy(probs: np.ndarray) -> np.ndarray:
    p = np.clip(probs, 1e-300, None)
    return -(probs * np.log(p)).sum(axis=-1)


def gaussian_entropy(sigma: np.ndarray) -> np.ndarray:
    return np.log(sigma).sum(axis=-1) + 1.0 + LOG_TAU


def sample_and_logprob(
    dist: ActionDistribution, rng: np.random.Generator
) -> tuple[Action, float]:
    """Draw an action and its analytic log probability.

    Continuous samples are clamped to [-1, 1] after sampling; the log
    probability is evaluated at the pre-clamp sample.
    """
    if isinstance(dist, CategoricalDist):
        if not np.all(np.isfinite(dist.probs)):
            raise FloatingPointError(f"non-finite action probabilities: {dist.probs}")
        u = rng.random()
        idx = int(np.searchsorted(np.cumsum(dist.probs), u))
        idx = min(idx, len(dist.probs) - 1)
        return DiscreteAction(idx), float(np.log(dist.probs[idx]))
    if not (np.all(np.isfinite(dist.mu)) and np.all(np.isfinite(dist.sigma))):
        raise FloatingPointError(f"non-finite gaussian head: mu={dist.mu} sigma={dist.sigma}")
    x = dist.mu + dist.sigma * rng.standard_normal(2)
    logp = float(gaussian_logprob(dist.mu, dist.sigma, x))
    return ContinuousAction(float(np.clip(x[0], -1.0, 1.0)), float(np.clip(x[1], -1.0, 1.0))), logp


def greedy_action(dist: ActionDistribution) -> Action:
    """Deterministic acting rule: argmax probability / distribution mean."""
    if isinstance(dist, CategoricalDist):
        return DiscreteAction(int(np.argmax(dist.probs)))
    return ContinuousAction(float(dist.mu[0]), float(dist.mu[1]))


def log_prob_of(dist: ActionDistribution, action: Action) -> float:
    if isinstance(dist, CategoricalDist):
        assert isinstance(action, DiscreteAction)
        return float(np.log(dist.probs[action.index]))
    assert isinstance(action, ContinuousAction)
    x = np.array([action.steer, action.speed])
    return float(gaussian_logprob(dist.mu, dist.sigma, x))


def sgd_step(params: NetParams, grads: list[tuple[np.ndarray, np.ndarray]], lr: float) -> None:
    for (dw, db), w, b in zip(grads, params.weights, params.biases):
        w -= lr * dw
        b -= lr * db


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: NetParams) -> "AdamState":
        zeros = [np.zeros((w.size + b.size,)) for w, b in zip(params.weights, params.biases)]
        return cls(m=[z.copy() for z in zeros], v=zeros)


def adam_step(
    params: NetParams,
    grads: list[tuple[np.ndarray, np.ndarray]],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    state.t += 1
    t = state.t
    scale = lr * math.sqrt(1.0 - beta2**t) / (1.0 - beta1**t)
    for i, (dw, db) in enumerate(grads):
        g = np.concatenate([dw.ravel(), db.ravel()])
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g
        step_flat = scale * state.m[i] / (np.sqrt(state.v[i]) + eps)
        nw = params.weights[i].size
        params.weights[i] -= step_flat[:nw].reshape(params.weights[i].shape)
        params.biases[i] -= step_flat[nw:].reshape(params.biases[i].shape)


def params_to_dict(params: NetParams) -> dict:
    """JSON-serializable form; floats round-trip bitwise through repr."""
    return {
        "version": 1,
        "head": params.head,
        "activation": params.activation,
        "shapes": [list(w.shape) for w in params.weights],
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }


def params_from_dict(data: dict) -> NetParams:
    if data.get("version") != 1:
        raise ValueError(f"unsupported checkpoint version {data.get('version')!r}")
    weights = [np.array(w, dtype=float) for w in data["weights"]]
    biases = [np.array(b, dtype=float) for b in data["biases"]]
    for w, shape in zip(weights, data["shapes"]):
        if list(w.shape) != shape:
            raise ValueError(f"checkpoint shape mismatch: {w.shape} vs {shape}")
    return NetParams(
        weights=weights, biases=biases, activation=data["activation"], head=data["head"]
    )
