"""Dense feed-forward networks with hand-written reverse-mode gradients.

Deliberately minimal: fixed-depth MLPs (two hidden layers by default), an
adaptive-moment optimizer, Polyak target updates, and a bit-exact JSON
checkpoint format.  No autograd graph, no convolutions.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DomainError, ParseError

CHECKPOINT_FORMAT = "splitprune-mlp"
CHECKPOINT_VERSION = 1


def _relu(z):
    return np.maximum(z, 0.0)


def _identity(z):
    return z


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


class Mlp:
    """Affine stack with ReLU (or identity) hidden units.

    Output heads: ``identity`` for value estimates, ``sigmoid_scaled`` for
    rates bounded to (0, output_high).  Weights are W[k] of shape
    (fan_out, fan_in); forward accepts a single vector or a batch matrix.
    """

    def __init__(self, weights, biases, hidden_activation: str = "relu",
                 output_activation: str = "identity", output_high: float = 1.0):
        if hidden_activation not in ("relu", "identity"):
            raise DomainError(f"unknown hidden activation {hidden_activation!r}")
        if output_activation not in ("identity", "sigmoid_scaled"):
            raise DomainError(f"unknown output activation {output_activation!r}")
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation
        self.output_high = float(output_high)

    @classmethod
    def init(cls, widths, rng: np.random.Generator, hidden_activation: str = "relu",
             output_activation: str = "identity", output_high: float = 1.0) -> "Mlp":
        """Fan-in-scaled uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            lim = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
            biases.append(rng.uniform(-lim, lim, size=fan_out))
        return cls(weights, biases, hidden_activation, output_activation, output_high)

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    def parameters(self):
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                   self.hidden_activation, self.output_activation, self.output_high)

    def _out_act(self, z):
        if self.output_activation == "identity":
            return _identity(z)
        return self.output_high * _sigmoid(z)

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        h = np.atleast_2d(x)
        if h.shape[1] != self.widths[0]:
            raise DomainError(f"input width {h.shape[1]} != expected {self.widths[0]}")
        act = _relu if self.hidden_activation == "relu" else _identity
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = act(h @ w.T + b)
        y = self._out_act(h @ self.weights[-1].T + self.biases[-1])
        return y[0] if single else y

    def backward(self, x, upstream):
        """Exact gradients of ``sum(upstream * forward(x))``.

        Returns ([(dW, db), ...] matching layers, d_input).
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        h = np.atleast_2d(x)
        upstream = np.atleast_2d(np.asarray(upstream, dtype=float))
        if upstream.shape != (h.shape[0], self.widths[-1]):
            raise DomainError(
                f"upstream shape {upstream.shape} != {(h.shape[0], self.widths[-1])}"
            )
        act = _relu if self.hidden_activation == "relu" else _identity
        inputs = []  # layer inputs
        zs = []
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            inputs.append(h)
            z = h @ w.T + b
            zs.append(z)
            h = act(z)
        inputs.append(h)
        z_out = h @ self.weights[-1].T + self.biases[-1]

        if self.output_activation == "identity":
            dz = upstream
        else:
            s = _sigmoid(z_out)
            dz = upstream * self.output_high * s * (1.0 - s)
        grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(self.weights)
        for k in range(len(self.weights) - 1, -1, -1):
            grads[k] = (dz.T @ inputs[k], dz.sum(axis=0))
            dh = dz @ self.weights[k]
            if k > 0:
                if self.hidden_activation == "relu":
                    dz = dh * (zs[k - 1] > 0)
                else:
                    dz = dh
        dx = dh
        return grads, (dx[0] if single else dx)

    def to_dict(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "widths": list(self.widths),
            "hidden_activation": self.hidden_activation,
            "output_activation": self.output_activation,
            "output_high": self.output_high,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Mlp":
        if data.get("format") != CHECKPOINT_FORMAT:
            raise ParseError(f"not an MLP checkpoint: format={data.get('format')!r}")
        if data.get("version") != CHECKPOINT_VERSION:
            raise ParseError(f"unsupported checkpoint version {data.get('version')!r}")
        net = cls(data["weights"], data["biases"], data["hidden_activation"],
                  data["output_activation"], data["output_high"])
        if list(net.widths) != data["widths"]:
            raise ParseError("checkpoint widths do not match stored arrays")
        return net


def save_mlp(net: Mlp, path: str | Path) -> None:
    Path(path).write_text(json.dumps(net.to_dict()))


def load_mlp(path: str | Path) -> Mlp:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid checkpoint JSON: {exc}") from None
    return Mlp.from_dict(data)


class Adam:
    """Adaptive-moment optimizer with bias correction (standard defaults)."""

    def __init__(self, net: Mlp, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in net.parameters()]
        self.v = [np.zeros_like(p) for p in net.parameters()]

    def step(self, net: Mlp, grads) -> None:
        flat = []
        for dw, db in grads:
            flat.append(dw)
            flat.append(db)
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(net.parameters(), flat, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def soft_update(target: Mlp, online: Mlp, tau: float) -> None:
    """target <- (1 - tau) * target + tau * online, elementwise, in place."""
    for tp, op in zip(target.parameters(), online.parameters()):
        if tp.shape != op.shape:
            raise DomainError(f"shape mismatch {tp.shape} vs {op.shape}")
        tp *= 1.0 - tau
        tp += tau * op
