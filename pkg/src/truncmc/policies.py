"""Differentiable discrete-action policies over feature observations.

A :class:`SoftmaxPolicy` maps an observation vector through an optional stack
of tanh hidden layers to one logit per action, clamps the logits to
``[-LOGIT_CLAMP, LOGIT_CLAMP]`` (keeping every action probability strictly
positive, which importance weighting relies on) and samples from the softmax.

Gradients are computed by hand-rolled reverse accumulation over the fixed
layer topology — no tape, no external autodiff.  The two primitives every
caller needs are the score ``d log pi(a|s) / d theta`` and weighted sums of
logit gradients (:meth:`SoftmaxPolicy.weighted_logit_grad`), from which the
surrogate-objective gradients are assembled as single batched backward passes.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

#: Raw logits are clipped to this magnitude before the softmax.  Clipped
#: entries propagate zero gradient (subgradient convention).
LOGIT_CLAMP = 30.0


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class LayerShapes:
    """Weight/bias shapes and flat-vector offsets for a fixed topology."""

    sizes: tuple[int, ...]  # (obs_dim, *hidden, n_actions)

    def slots(self):
        offset = 0
        for fan_in, fan_out in zip(self.sizes, self.sizes[1:]):
            w_len = fan_out * fan_in
            yield (offset, offset + w_len, (fan_out, fan_in))
            offset += w_len + fan_out
        # generator length doubles as the parameter count via .n_params

    @property
    def n_params(self) -> int:
        return sum(
            fan_out * fan_in + fan_out
            for fan_in, fan_out in zip(self.sizes, self.sizes[1:])
        )


class SoftmaxPolicy:
    """Feed-forward softmax policy with a flat parameter vector.

    ``hidden=()`` gives the linear-softmax policy (logits = W @ obs + b);
    non-empty ``hidden`` inserts tanh layers of those widths.
    """

    def __init__(
        self,
        obs_dim: int,
        n_actions: int,
        hidden: tuple[int, ...] = (),
        params: np.ndarray | None = None,
    ):
        if obs_dim < 1 or n_actions < 2:
            raise DomainError("need at least one feature and two actions")
        if any(h < 1 for h in hidden):
            raise DomainError(f"hidden layer widths must be positive, got {hidden}")
        self.obs_dim = int(obs_dim)
        self.n_actions = int(n_actions)
        self.hidden = tuple(int(h) for h in hidden)
        self.shapes = LayerShapes((self.obs_dim, *self.hidden, self.n_actions))
        if params is None:
            params = np.zeros(self.shapes.n_params)
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.shapes.n_params,):
            raise DomainError(
                f"expected {self.shapes.n_params} parameters, got {params.shape}"
            )
        self.params = params

    # -- construction ------------------------------------------------------

    @classmethod
    def init_normc(
        cls,
        obs_dim: int,
        n_actions: int,
        hidden: tuple[int, ...] = (),
        rng: np.random.Generator | None = None,
    ) -> "SoftmaxPolicy":
        """Standard-normal weights rescaled so each unit's fan-in has unit norm."""
        rng = rng or np.random.default_rng()
        policy = cls(obs_dim, n_actions, hidden)
        params = np.zeros(policy.shapes.n_params)
        for w_start, w_end, (fan_out, fan_in) in policy.shapes.slots():
            w = rng.standard_normal((fan_out, fan_in))
            w /= np.linalg.norm(w, axis=1, keepdims=True)
            params[w_start:w_end] = w.ravel()
            # biases (the slot right after the weights) stay zero
        return cls(obs_dim, n_actions, hidden, params)

    def with_params(self, params: np.ndarray) -> "SoftmaxPolicy":
        return SoftmaxPolicy(self.obs_dim, self.n_actions, self.hidden, params)

    def _layers(self, params: np.ndarray | None = None):
        params = self.params if params is None else params
        for w_start, w_end, shape in self.shapes.slots():
            fan_out = shape[0]
            yield params[w_start:w_end].reshape(shape), params[w_end : w_end + fan_out]

    # -- forward -----------------------------------------------------------

    def logits(self, obs: np.ndarray) -> np.ndarray:
        """Clamped logits for a single observation."""
        h = np.asarray(obs, dtype=np.float64)
        if h.shape != (self.obs_dim,):
            raise DomainError(f"expected observation of shape ({self.obs_dim},)")
        layers = list(self._layers())
        for w, b in layers[:-1]:
            h = np.tanh(w @ h + b)
        w, b = layers[-1]
        return np.clip(w @ h + b, -LOGIT_CLAMP, LOGIT_CLAMP)

    def action_probs(self, obs: np.ndarray) -> np.ndarray:
        return _softmax(self.logits(obs))

    def forward_batch(self, xs: np.ndarray):
        """Forward a batch of observations, keeping activations for backprop.

        Returns ``(probs, cache)`` where ``cache`` holds the per-layer inputs
        and the clamp pass-through mask.
        """
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim != 2 or xs.shape[1] != self.obs_dim:
            raise DomainError(f"expected batch of shape (N, {self.obs_dim})")
        inputs = [xs]
        h = xs
        layers = list(self._layers())
        for w, b in layers[:-1]:
            h = np.tanh(h @ w.T + b)
            inputs.append(h)
        w, b = layers[-1]
        raw = h @ w.T + b
        mask = np.abs(raw) < LOGIT_CLAMP
        probs = _softmax(np.clip(raw, -LOGIT_CLAMP, LOGIT_CLAMP))
        return probs, (inputs, mask)

    def action_probs_batch(self, xs: np.ndarray) -> np.ndarray:
        return self.forward_batch(xs)[0]

    def sample(self, obs: np.ndarray, rng: np.random.Generator) -> int:
        return self.sample_with_probs(self.action_probs(obs), rng)

    @staticmethod
    def sample_with_probs(probs: np.ndarray, rng: np.random.Generator) -> int:
        # inverse-CDF draw; the running sum replicates cumsum + searchsorted
        # without per-call array overhead (this sits on the hot rollout path)
        u = rng.random()
        edges = probs.tolist()
        acc = 0.0
        for idx in range(len(edges) - 1):
            acc += edges[idx]
            if u < acc:
                return idx
        return len(edges) - 1

    # -- reverse accumulation ------------------------------------------------

    def weighted_logit_grad(self, xs: np.ndarray, logit_weights: np.ndarray) -> np.ndarray:
        """Flat gradient of ``sum_k sum_a logit_weights[k, a] * logit_a(xs[k])``.

        The workhorse: any scalar objective whose per-sample derivative with
        respect to the logits is known reduces to one call.  Clamped logits
        contribute zero.
        """
        _, cache = self.forward_batch(xs)
        return self._backward_cached(cache, np.asarray(logit_weights, dtype=np.float64))

    def grad_log_prob(self, obs: np.ndarray, action: int) -> np.ndarray:
        """Score vector ``d log pi(action|obs) / d theta``."""
        probs, cache = self.forward_batch(np.asarray(obs, dtype=np.float64)[None, :])
        weights = -probs
        weights[0, action] += 1.0
        return self._backward_cached(cache, weights)

    def _backward_cached(self, cache, logit_weights: np.ndarray) -> np.ndarray:
        inputs, mask = cache
        g = logit_weights * mask
        layers = list(self._layers())
        slots = list(self.shapes.slots())
        grad = np.empty_like(self.params)
        for layer_idx in range(len(layers) - 1, -1, -1):
            w, _ = layers[layer_idx]
            w_start, w_end, shape = slots[layer_idx]
            fan_out = shape[0]
            h_in = inputs[layer_idx]
            grad[w_start:w_end] = (g.T @ h_in).ravel()
            grad[w_end : w_end + fan_out] = g.sum(axis=0)
            if layer_idx > 0:
                g = (g @ w) * (1.0 - h_in * h_in)  # tanh' through the layer input
        return grad

    # -- serialization -------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": "softmax",
                "obs_dim": self.obs_dim,
                "n_actions": self.n_actions,
                "hidden": list(self.hidden),
                "activation": "tanh",
                "feature_map": "identity",
                "params": self.params.tolist(),
            }
        )

    @staticmethod
    def from_json(text: str) -> "SoftmaxPolicy":
        data = json.loads(text)
        if data.get("kind") != "softmax":
            raise DomainError(f"unknown policy kind {data.get('kind')!r}")
        return SoftmaxPolicy(
            data["obs_dim"],
            data["n_actions"],
            tuple(data["hidden"]),
            np.array(data["params"], dtype=np.float64),
        )

    def describe(self) -> str:
        """Short stable identifier: topology plus a digest of the parameters."""
        arch = "-".join(map(str, self.shapes.sizes))
        digest = hashlib.sha256(self.params.tobytes()).hexdigest()[:10]
        return f"softmax[{arch}]#{digest}"


def state_renyi2(target: SoftmaxPolicy, behavior: SoftmaxPolicy, obs: np.ndarray) -> float:
    """Exponentiated 2-Renyi divergence of the two action distributions at ``obs``.

    ``sum_a p(a)^2 / q(a)`` with ``p`` the target and ``q`` the behavior
    probabilities; equals 1 when the distributions coincide and is >= 1
    always (Cauchy-Schwarz).
    """
    p = target.action_probs(obs)
    q = behavior.action_probs(obs)
    return float(np.sum(p * p / q))


def state_renyi2_grad(
    target: SoftmaxPolicy, behavior: SoftmaxPolicy, obs: np.ndarray
) -> np.ndarray:
    """Gradient of :func:`state_renyi2` with respect to the target parameters.

    Through the softmax, ``d/dz_a = 2 p_a (p_a / q_a - d)`` with
    ``d = sum_b p_b^2 / q_b``.
    """
    xs = np.asarray(obs, dtype=np.float64)[None, :]
    probs, cache = target.forward_batch(xs)
    q = behavior.action_probs(obs)
    p = probs[0]
    d = float(np.sum(p * p / q))
    weights = (2.0 * p * (p / q - d))[None, :]
    return target._backward_cached(cache, weights)
