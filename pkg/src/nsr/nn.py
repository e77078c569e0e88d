"""Dense ReLU networks with hand-written reverse mode, Adam and Polyak updates.

All parameters of a :class:`Network` live in one flat float64 vector; the
per-layer weight matrices and bias vectors are views into it. The nets are
small enough that per-call interpreter overhead dominates plain numpy code, so
the forward pass, the reverse pass and the optimizer updates are compiled with
numba. Activations are kept transposed, one (units, batch) block per layer.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from numba import njit

from ._validation import check_batch, check_finite, check_weights
from .exceptions import InvalidArgumentError

OUTPUT_ACTIVATIONS = ("identity", "tanh")
LOSS_KINDS = ("weighted_mse", "weighted_neg_mean")
_EMPTY = np.zeros(0)


def _layer_views(flat, layer_dims):
    weights, biases = [], []
    offset = 0
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        n = fan_in * fan_out
        weights.append(flat[offset:offset + n].reshape(fan_out, fan_in))
        offset += n
        biases.append(flat[offset:offset + fan_out])
        offset += fan_out
    return weights, biases


def _n_params(layer_dims):
    return sum((i + 1) * o for i, o in zip(layer_dims[:-1], layer_dims[1:]))


def _check_dims(layer_dims):
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise InvalidArgumentError(
            f"layer_dims needs at least two positive entries, got {list(layer_dims)}"
        )
    return tuple(dims)


class Gradients:
    """Flat gradient vector laid out exactly like a :class:`Network`'s parameters."""

    def __init__(self, layer_dims, flat=None):
        self.layer_dims = tuple(layer_dims)
        n = _n_params(self.layer_dims)
        self.flat = np.zeros(n) if flat is None else np.asarray(flat, dtype=np.float64)
        if self.flat.shape != (n,):
            raise InvalidArgumentError(f"gradient vector must have length {n}")

    @property
    def weights(self):
        return _layer_views(self.flat, self.layer_dims)[0]

    @property
    def biases(self):
        return _layer_views(self.flat, self.layer_dims)[1]

    def __mul__(self, k):
        return Gradients(self.layer_dims, self.flat * k)

    __rmul__ = __mul__


class Network:
    """Multilayer perceptron: ReLU hidden layers, identity or tanh output.

    Weight ``i`` has shape ``(layer_dims[i+1], layer_dims[i])``. Adam moments and
    the step counter travel with the parameters.
    """

    def __init__(self, layer_dims, output_activation="identity", params=None):
        self.layer_dims = _check_dims(layer_dims)
        if output_activation not in OUTPUT_ACTIVATIONS:
            raise InvalidArgumentError(f"unknown output activation {output_activation!r}")
        self.output_activation = output_activation
        n = _n_params(self.layer_dims)
        if params is None:
            self.params = np.zeros(n)
        else:
            self.params = np.array(params, dtype=np.float64).reshape(-1)
            if self.params.shape != (n,):
                raise InvalidArgumentError(f"expected {n} parameters, got {self.params.size}")
        self.weights, self.biases = _layer_views(self.params, self.layer_dims)
        self._dims = np.asarray(self.layer_dims, dtype=np.int64)
        self.adam_m = np.zeros(n)
        self.adam_v = np.zeros(n)
        self.step = 0

    @property
    def n_layers(self):
        return len(self.layer_dims) - 1

    @property
    def in_dim(self):
        return self.layer_dims[0]

    @property
    def out_dim(self):
        return self.layer_dims[-1]

    def copy(self):
        net = Network(self.layer_dims, self.output_activation, self.params)
        net.adam_m[:] = self.adam_m
        net.adam_v[:] = self.adam_v
        net.step = self.step
        return net

    def load_params_from(self, other):
        _check_congruent(self, other)
        self.params[:] = other.params

    def checksum(self):
        return hash(self.params.tobytes())

    def to_dict(self, include_optimizer=True):
        doc = {
            "layer_dims": list(self.layer_dims),
            "hidden_activation": "relu",
            "output_activation": self.output_activation,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }
        if include_optimizer:
            doc["adam"] = {"m": self.adam_m.tolist(), "v": self.adam_v.tolist(), "step": self.step}
        return doc

    @classmethod
    def from_dict(cls, doc):
        net = cls(doc["layer_dims"], doc["output_activation"])
        for w, b, w_doc, b_doc in zip(net.weights, net.biases, doc["weights"], doc["biases"]):
            w[...] = np.asarray(w_doc, dtype=np.float64)
            b[...] = np.asarray(b_doc, dtype=np.float64)
        adam = doc.get("adam")
        if adam is not None:
            net.adam_m[:] = adam["m"]
            net.adam_v[:] = adam["v"]
            net.step = int(adam["step"])
        return net


def save_network(net: Network, path) -> None:
    # json writes floats with repr(), which round-trips float64 exactly
    Path(path).write_text(json.dumps(net.to_dict()), encoding="utf-8")


def load_network(path) -> Network:
    return Network.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def mlp_init(layer_dims, seed: int, output_activation: str = "identity") -> Network:
    """Build a network with every parameter drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).

    Weights and bias of each layer are drawn in order from
    ``np.random.default_rng(seed)``, so ``(layer_dims, seed)`` fixes the result
    bit for bit.
    """
    net = Network(layer_dims, output_activation)
    rng = np.random.default_rng(seed)
    for w, b in zip(net.weights, net.biases):
        bound = 1.0 / np.sqrt(w.shape[1])
        w[...] = rng.uniform(-bound, bound, size=w.shape)
        b[...] = rng.uniform(-bound, bound, size=b.shape)
    return net


@njit(cache=True)
def _forward_kernel(params, dims, X, tanh_out):
    """Activations of every layer stacked row-wise, each stored as (units, batch)."""
    n_layers = dims.shape[0] - 1
    batch = X.shape[0]
    total = 0
    for d in dims:
        total += d
    buf = np.empty((total, batch))
    buf[0:dims[0], :] = X.T
    row = 0
    p = 0
    for i in range(n_layers):
        fan_in = dims[i]
        fan_out = dims[i + 1]
        w = params[p:p + fan_in * fan_out].reshape(fan_out, fan_in)
        p += fan_in * fan_out
        b = params[p:p + fan_out]
        p += fan_out
        z = buf[row + fan_in:row + fan_in + fan_out]
        np.dot(w, buf[row:row + fan_in], z)
        row += fan_in
        last = i == n_layers - 1
        for r in range(fan_out):
            for c in range(batch):
                v = z[r, c] + b[r]
                if not last:
                    if v < 0.0:
                        v = 0.0
                elif tanh_out:
                    v = np.tanh(v)
                z[r, c] = v
    return buf


@njit(cache=True)
def _backward_kernel(params, dims, buf, grad_out, grads, tanh_out, param_grads, input_grad):
    n_layers = dims.shape[0] - 1
    batch = buf.shape[1]
    offsets = np.zeros(n_layers + 1, dtype=np.int64)
    poffsets = np.zeros(n_layers + 1, dtype=np.int64)
    for i in range(n_layers):
        offsets[i + 1] = offsets[i] + dims[i]
        poffsets[i + 1] = poffsets[i] + dims[i] * dims[i + 1] + dims[i + 1]
    k = dims[n_layers]
    g = np.empty((k, batch))
    out_row = offsets[n_layers]
    for r in range(k):
        for c in range(batch):
            v = grad_out[c, r]
            if tanh_out:
                a = buf[out_row + r, c]
                v *= 1.0 - a * a
            g[r, c] = v
    for i in range(n_layers - 1, -1, -1):
        fan_in = dims[i]
        fan_out = dims[i + 1]
        a = buf[offsets[i]:offsets[i] + fan_in]
        p = poffsets[i]
        if param_grads:
            np.dot(g, a.T, grads[p:p + fan_in * fan_out].reshape(fan_out, fan_in))
            for r in range(fan_out):
                acc = 0.0
                for c in range(batch):
                    acc += g[r, c]
                grads[p + fan_in * fan_out + r] = acc
        if i > 0 or input_grad:
            w = params[p:p + fan_in * fan_out].reshape(fan_out, fan_in)
            g = np.dot(w.T, g)
            if i > 0:
                for r in range(fan_in):
                    for c in range(batch):
                        if a[r, c] <= 0.0:
                            g[r, c] = 0.0
    return g


class ForwardCache:
    """Activations kept by :func:`forward_cache` for a later :func:`backprop`."""

    def __init__(self, net, buf):
        self.buf = buf
        self.layer_dims = net.layer_dims

    @property
    def acts(self):
        """Per-layer activations as (batch, units) views, input first."""
        out, row = [], 0
        for d in self.layer_dims:
            out.append(self.buf[row:row + d].T)
            row += d
        return out


def forward_cache(net: Network, X: np.ndarray):
    """Forward a 2-D batch without validation; returns ``(output, cache)``."""
    buf = _forward_kernel(net.params, net._dims, X, net.output_activation == "tanh")
    return buf[buf.shape[0] - net.out_dim:].T, ForwardCache(net, buf)


def predict(net: Network, X: np.ndarray) -> np.ndarray:
    """Unchecked batched forward used on hot paths."""
    return forward_cache(net, X)[0]


def forward(net: Network, x) -> np.ndarray:
    """Evaluate ``net`` on one input vector (or a 2-D batch of them)."""
    arr = check_finite(x)
    single = arr.ndim == 1
    X = check_batch(arr, net.in_dim, "input")
    out = predict(net, X)
    return out[0] if single else out


def backprop(net: Network, cache: ForwardCache, grad_out, grads: Gradients | None = None,
             param_grads=True, input_grad=False):
    """Reverse pass given the cache from :func:`forward_cache`.

    ``grad_out`` is dLoss/dOutput for the whole batch, shape (batch, out_dim).
    Returns ``(grads, dLoss/dInput)``; either may be ``None`` when not requested.
    """
    if param_grads and grads is None:
        grads = Gradients(net.layer_dims)
    flat = grads.flat if param_grads else _EMPTY
    g_in = _backward_kernel(net.params, net._dims, cache.buf, grad_out, flat,
                            net.output_activation == "tanh", param_grads, input_grad)
    return (grads if param_grads else None), (g_in.T if input_grad else None)


def backward_weighted_scalar_loss(net: Network, loss_kind: str, inputs, targets=None,
                                  weights=None):
    """Exact gradient of ``mean_i weight_i * loss_i`` over a batch.

    ``weighted_mse``: ``loss_i = ||net(x_i) - target_i||^2``.
    ``weighted_neg_mean``: ``loss_i = -sum(net(x_i))``.
    ``weights=None`` runs the unweighted code path. Returns ``(Gradients, loss)``.
    """
    if loss_kind not in LOSS_KINDS:
        raise InvalidArgumentError(f"unknown loss kind {loss_kind!r}")
    X = check_batch(inputs, net.in_dim, "inputs")
    n = X.shape[0]
    w = None if weights is None else check_weights(weights, n, low=0.0)
    out, cache = forward_cache(net, X)
    if loss_kind == "weighted_mse":
        if targets is None:
            raise InvalidArgumentError("weighted_mse needs targets")
        T = check_batch(targets, net.out_dim, "targets")
        if T.shape[0] != n:
            raise InvalidArgumentError("targets and inputs differ in batch length")
        grad_out, loss = mse_grad(out - T, w)
    else:
        if targets is not None:
            raise InvalidArgumentError("weighted_neg_mean takes no targets")
        grad_out, loss = neg_mean_grad(out, w)
    grads, _ = backprop(net, cache, grad_out)
    return grads, loss


def mse_grad(diff, weights=None):
    """dLoss/dOutput and loss value for the (weighted) mean squared error."""
    n = diff.shape[0]
    per_sample = np.sum(diff * diff, axis=1)
    if weights is None:
        return diff * (2.0 / n), float(np.mean(per_sample))
    return diff * (weights * (2.0 / n))[:, None], float(np.mean(weights * per_sample))


def neg_mean_grad(out, weights=None):
    n, k = out.shape
    per_sample = -np.sum(out, axis=1)
    if weights is None:
        return np.full((n, k), -1.0 / n), float(np.mean(per_sample))
    return np.repeat((weights * (-1.0 / n))[:, None], k, axis=1), float(np.mean(weights * per_sample))


def _check_congruent(a, b):
    if tuple(a.layer_dims) != tuple(b.layer_dims):
        raise InvalidArgumentError(
            f"shape mismatch: {list(a.layer_dims)} vs {list(b.layer_dims)}"
        )


@njit(cache=True)
def _adam_kernel(params, m, v, g, lr, beta1, beta2, eps, step):
    c1 = 1.0 - beta1 ** step
    c2 = 1.0 - beta2 ** step
    for i in range(params.shape[0]):
        gi = g[i]
        m[i] = beta1 * m[i] + (1.0 - beta1) * gi
        v[i] = beta2 * v[i] + (1.0 - beta2) * (gi * gi)
        params[i] -= lr * (m[i] / c1) / (np.sqrt(v[i] / c2) + eps)


def adam_step(net: Network, grads: Gradients, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> Network:
    """One bias-corrected Adam step, applied in place; returns ``net``."""
    _check_congruent(net, grads)
    if not lr > 0:
        raise InvalidArgumentError("lr must be positive")
    net.step += 1
    _adam_kernel(net.params, net.adam_m, net.adam_v, grads.flat, lr, beta1, beta2, eps, net.step)
    return net


def sgd_step(net: Network, grads: Gradients, lr: float) -> Network:
    _check_congruent(net, grads)
    net.params -= lr * grads.flat
    return net


def soft_update(target: Network, source: Network, tau: float) -> Network:
    """Polyak blend ``target <- (1 - tau) * target + tau * source`` in place."""
    _check_congruent(target, source)
    if not 0.0 <= tau <= 1.0:
        raise InvalidArgumentError("tau must lie in [0, 1]")
    _blend_kernel(target.params, source.params, tau)
    return target


@njit(cache=True)
def _blend_kernel(target, source, tau):
    keep = 1.0 - tau
    for i in range(target.shape[0]):
        target[i] = keep * target[i] + tau * source[i]
