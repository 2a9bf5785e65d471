"""Fully connected Q-network with late fusion of the non-grid features.

Layout (all dense, weights stored ``(fan_in, fan_out)``)::

    grid -> h0 -> h1 -> h2 --+
                             +-> concat -> fusion layer -> linear head
    fusion features ---------+

Hidden and fusion layers use ReLU; the head is linear.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import InvalidInputError, ModelIncompatibleError

FORMAT_VERSION = 1


@dataclass(frozen=True)
class NetworkSpec:
    grid_input_dim: int = 512
    fusion_input_dim: int = 27
    hidden_dims: tuple = (128, 128, 128)
    fusion_layer_dim: int = 32
    output_dim: int = 5

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        dims = [self.grid_input_dim, self.fusion_input_dim, self.fusion_layer_dim,
                self.output_dim, *self.hidden_dims]
        if not self.hidden_dims or any(d <= 0 for d in dims):
            raise InvalidInputError("network dimensions must be positive")

    def layer_shapes(self):
        shapes = []
        fan_in = self.grid_input_dim
        for h in self.hidden_dims:
            shapes.append((fan_in, h))
            fan_in = h
        shapes.append((fan_in + self.fusion_input_dim, self.fusion_layer_dim))
        shapes.append((self.fusion_layer_dim, self.output_dim))
        return shapes


class QNetwork:
    """Q-network parameters plus batched forward and backward passes."""

    def __init__(self, spec: NetworkSpec, weights=None, biases=None):
        self.spec = spec
        shapes = spec.layer_shapes()
        if weights is None:
            weights = [np.zeros(s) for s in shapes]
            biases = [np.zeros(s[1]) for s in shapes]
        if len(weights) != len(shapes) or len(biases) != len(shapes):
            raise ModelIncompatibleError("layer count does not match the network spec")
        self.weights = []
        self.biases = []
        for w, b, shape in zip(weights, biases, shapes):
            w = np.array(w, dtype=np.float64)
            b = np.array(b, dtype=np.float64)
            if w.shape != shape or b.shape != (shape[1],):
                raise ModelIncompatibleError(
                    f"layer shape {w.shape}/{b.shape} does not match spec {shape}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ModelIncompatibleError("non-finite weights")
            self.weights.append(w)
            self.biases.append(b)

    @classmethod
    def initialize(cls, spec: NetworkSpec, rng: np.random.Generator) -> "QNetwork":
        """He-uniform hidden layers, 1/sqrt(fan_in) uniform head, zero biases."""
        shapes = spec.layer_shapes()
        weights = []
        for i, (fan_in, fan_out) in enumerate(shapes):
            if i == len(shapes) - 1:
                limit = 1.0 / math.sqrt(fan_in)
            else:
                limit = math.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        return cls(spec, weights, [np.zeros(s[1]) for s in shapes])

    @classmethod
    def constant(cls, spec: NetworkSpec, action: int) -> "QNetwork":
        """Scripted stand-in: zero weights and a head bias that always picks ``action``."""
        if not 0 <= action < spec.output_dim:
            raise InvalidInputError(f"action {action} outside [0, {spec.output_dim})")
        net = cls(spec)
        net.biases[-1][action] = 1.0
        return net

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "QNetwork":
        return QNetwork(self.spec, [w.copy() for w in self.weights],
                        [b.copy() for b in self.biases])

    def load_from(self, other: "QNetwork"):
        """Overwrite parameters in place with a bit-exact copy of ``other``."""
        for dst, src in zip(self.weights + self.biases, other.weights + other.biases):
            dst[...] = src

    def checksum(self) -> str:
        h = hashlib.sha256()
        for arr in self.weights + self.biases:
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def _check_inputs(self, grid, fusion):
        grid = np.atleast_2d(np.asarray(grid, dtype=np.float64))
        fusion = np.atleast_2d(np.asarray(fusion, dtype=np.float64))
        if grid.shape[1] != self.spec.grid_input_dim:
            raise InvalidInputError(
                f"grid has {grid.shape[1]} features, expected {self.spec.grid_input_dim}")
        if fusion.shape[1] != self.spec.fusion_input_dim:
            raise InvalidInputError(
                f"fusion has {fusion.shape[1]} features, expected {self.spec.fusion_input_dim}")
        if grid.shape[0] != fusion.shape[0]:
            raise InvalidInputError("grid and fusion batch sizes differ")
        return grid, fusion

    def forward(self, grid, fusion, keep=False):
        """Q-values for a batch; with ``keep`` also returns the activations
        needed by :meth:`backward`."""
        grid, fusion = self._check_inputs(grid, fusion)
        n_hidden = len(self.spec.hidden_dims)
        acts = [grid]
        h = grid
        for i in range(n_hidden):
            h = np.maximum(h @ self.weights[i] + self.biases[i], 0.0)
            acts.append(h)
        z = np.concatenate([h, fusion], axis=1)
        acts.append(z)
        f = np.maximum(z @ self.weights[n_hidden] + self.biases[n_hidden], 0.0)
        acts.append(f)
        q = f @ self.weights[-1] + self.biases[-1]
        return (q, acts) if keep else q

    def backward(self, acts, d_q):
        """Gradients of ``sum(d_q * Q)`` w.r.t. every weight and bias."""
        n_hidden = len(self.spec.hidden_dims)
        gw = [None] * self.n_layers
        gb = [None] * self.n_layers
        f = acts[-1]
        z = acts[-2]
        gw[-1] = f.T @ d_q
        gb[-1] = d_q.sum(axis=0)
        d_f = (d_q @ self.weights[-1].T) * (f > 0)
        gw[n_hidden] = z.T @ d_f
        gb[n_hidden] = d_f.sum(axis=0)
        d_h = (d_f @ self.weights[n_hidden].T)[:, :self.spec.hidden_dims[-1]]
        for i in range(n_hidden - 1, -1, -1):
            d_h = d_h * (acts[i + 1] > 0)
            gw[i] = acts[i].T @ d_h
            gb[i] = d_h.sum(axis=0)
            if i > 0:
                d_h = d_h @ self.weights[i].T
        return gw, gb

    def q_values(self, obs) -> np.ndarray:
        """Q-values for a single :class:`~vvesim.sim.engine.AgentObservation`."""
        return self.forward(obs.grid, obs.fusion)[0]

    def to_dict(self) -> dict:
        spec = asdict(self.spec)
        spec["hidden_dims"] = list(self.spec.hidden_dims)
        names = [f"hidden_{i}" for i in range(len(self.spec.hidden_dims))] + ["fusion", "head"]
        return {
            "format_version": FORMAT_VERSION,
            "spec": spec,
            "layers": [{"name": n, "weights": w.tolist(), "bias": b.tolist()}
                       for n, w, b in zip(names, self.weights, self.biases)],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "QNetwork":
        try:
            version = doc["format_version"]
            spec = NetworkSpec(**doc["spec"])
            layers = doc["layers"]
            weights = [layer["weights"] for layer in layers]
            biases = [layer["bias"] for layer in layers]
        except (KeyError, TypeError, InvalidInputError) as exc:
            raise ModelIncompatibleError(f"malformed model document: {exc}") from exc
        if version != FORMAT_VERSION:
            raise ModelIncompatibleError(f"unsupported model format_version {version!r}")
        try:
            return cls(spec, weights, biases)
        except (TypeError, ValueError) as exc:
            raise ModelIncompatibleError(str(exc)) from exc

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "QNetwork":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ModelIncompatibleError(f"cannot read model {path}: {exc}") from exc
        return cls.from_dict(doc)
