"""Random network distillation novelty and the [1, 3] per-state update weights.

A frozen random *target* network and a trainable *predictor* embed each
(normalized) state; the squared distance between the two embeddings is the
state's novelty. Novelty of a batch is standardized with the batch's own mean
and population standard deviation and clamped to ``[WEIGHT_MIN, WEIGHT_MAX]``,
so familiar states keep weight 1 and only unusually novel ones get up to 3.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from . import nn
from .nn import _forward_kernel
from ._validation import check_batch, check_finite
from .exceptions import InvalidArgumentError

WEIGHT_MIN = 1.0
WEIGHT_MAX = 3.0
_STD_FLOOR = 1e-12


class RunningMeanStd:
    """Per-dimension running mean and (population) variance from running sums."""

    def __init__(self, dim):
        self.total = np.zeros(dim)
        self.total_sq = np.zeros(dim)
        self.count = 0
        self._refresh()

    def _refresh(self):
        if self.count == 0:
            self.mean = np.zeros_like(self.total)
            self.var = np.ones_like(self.total)
        else:
            self.mean = self.total / self.count
            self.var = np.maximum(self.total_sq / self.count - self.mean * self.mean, 0.0)
        self.inv_std = 1.0 / np.sqrt(self.var + 1e-8)

    def normalize(self, X, clip=5.0):
        """``clip((X - mean) / std, -clip, clip)`` row-wise."""
        return _normalize_kernel(X, self.mean, self.inv_std, float(clip))

    def update(self, X):
        _accumulate(X, self.total, self.total_sq)
        self.count += X.shape[0]
        self._refresh()

    def copy(self):
        out = RunningMeanStd(self.total.shape[0])
        out.total, out.total_sq, out.count = self.total.copy(), self.total_sq.copy(), self.count
        out._refresh()
        return out

    def to_dict(self):
        return {"sum": self.total.tolist(), "sum_sq": self.total_sq.tolist(), "count": self.count}

    @classmethod
    def from_dict(cls, doc):
        out = cls(len(doc["sum"]))
        out.total = np.asarray(doc["sum"], dtype=np.float64)
        out.total_sq = np.asarray(doc["sum_sq"], dtype=np.float64)
        out.count = int(doc["count"])
        out._refresh()
        return out


@njit(cache=True)
def _accumulate(X, total, total_sq):
    for i in range(X.shape[0]):
        for j in range(X.shape[1]):
            v = X[i, j]
            total[j] += v
            total_sq[j] += v * v


@njit(cache=True)
def _normalize_kernel(X, mean, inv_std, clip):
    Z = np.empty(X.shape)
    for i in range(X.shape[0]):
        for j in range(X.shape[1]):
            v = (X[i, j] - mean[j]) * inv_std[j]
            Z[i, j] = min(max(v, -clip), clip)
    return Z


@njit(cache=True)
def _embed_kernel(X, mean, inv_std, clip, pred_params, target_params, dims):
    """Normalize, embed with both nets and return the predictor activations,
    the embedding gap as (embed_dim, batch) and the squared gap per row."""
    Z = _normalize_kernel(X, mean, inv_std, clip)
    pbuf = _forward_kernel(pred_params, dims, Z, False)
    tbuf = _forward_kernel(target_params, dims, Z, False)
    k = dims[dims.shape[0] - 1]
    top = pbuf.shape[0] - k
    diff = pbuf[top:] - tbuf[top:]
    raw = np.zeros(X.shape[0])
    for r in range(k):
        for c in range(X.shape[0]):
            raw[c] += diff[r, c] * diff[r, c]
    return pbuf, diff, raw


@dataclass
class NoveltyWeights:
    raw: np.ndarray
    standardized: np.ndarray
    clamped: np.ndarray


def standardize(raw) -> np.ndarray:
    """``(raw - mean) / std`` with batch statistics; all zeros when std < 1e-12."""
    r = check_finite(raw, "novelty").reshape(-1)
    if r.size == 0:
        raise InvalidArgumentError("empty novelty batch")
    return _standardize(r)


@njit(cache=True)
def _standardize(r):
    n = r.shape[0]
    mean = 0.0
    for v in r:
        mean += v
    mean /= n
    out = np.empty(n)
    ss = 0.0
    for i in range(n):
        c = r[i] - mean
        out[i] = c
        ss += c * c
    std = np.sqrt(ss / n)
    if std < _STD_FLOOR:
        out[:] = 0.0
    else:
        out /= std
    return out


@njit(cache=True)
def _clamped(r):
    out = _standardize(r)
    for i in range(out.shape[0]):
        out[i] = min(max(out[i], WEIGHT_MIN), WEIGHT_MAX)
    return out


def clamp_weights(standardized) -> np.ndarray:
    """Element-wise clamp of standardized novelty to ``[WEIGHT_MIN, WEIGHT_MAX]``."""
    return np.clip(check_finite(standardized, "standardized novelty"), WEIGHT_MIN, WEIGHT_MAX)


def normalize_and_clamp(raw) -> np.ndarray:
    """Map raw novelties of one batch to update weights in [1, 3]."""
    r = check_finite(raw, "novelty").reshape(-1)
    if r.size == 0:
        raise InvalidArgumentError("empty novelty batch")
    return _clamped(r)


class NoveltyEstimator(TransformerMixin, BaseEstimator):
    """RND novelty model.

    Parameters
    ----------
    embed_dim : int
        Output width of both target and predictor.
    hidden_sizes : tuple of int
        Hidden ReLU layer widths shared by both networks.
    predictor_lr : float
        Adam learning rate used by ``partial_fit``/``fit``.
    obs_clip : float
        Normalized inputs are clipped to ``[-obs_clip, obs_clip]``.
    max_iter : int
        Predictor steps taken by ``fit`` on the full input.
    random_state : int
        Seeds the initialization of both networks.
    """

    def __init__(self, embed_dim=32, hidden_sizes=(32,), predictor_lr=1e-3, obs_clip=5.0,
                 max_iter=1, random_state=0):
        self.embed_dim = embed_dim
        self.hidden_sizes = hidden_sizes
        self.predictor_lr = predictor_lr
        self.obs_clip = obs_clip
        self.max_iter = max_iter
        self.random_state = random_state

    def _initialize(self, n_features):
        dims = [n_features, *self.hidden_sizes, self.embed_dim]
        seed_target, seed_pred = np.random.SeedSequence(self.random_state).generate_state(2)
        self.target_ = nn.mlp_init(dims, int(seed_target))
        self.predictor_ = nn.mlp_init(dims, int(seed_pred))
        self.normalizer_ = RunningMeanStd(n_features)
        self.n_features_in_ = n_features
        self.loss_ = None
        return self

    def _check_fitted(self):
        if not hasattr(self, "target_"):
            raise NotFittedError("NoveltyEstimator is not initialized; call fit or partial_fit")

    def _embed(self, X):
        """Predictor activations, embedding gap and novelty for a raw batch.

        The result is reused when asked again for the same array object with
        unchanged predictor and normalizer, which is the case when an update
        trains on the batch it has just scored.
        """
        key = (id(X), self.predictor_.step, self.normalizer_.count)
        cached = getattr(self, "_embed_cache", None)
        if cached is not None and cached[0] == key and cached[1] is X:
            return cached[2]
        norm = self.normalizer_
        pbuf, diff, raw = _embed_kernel(X, norm.mean, norm.inv_std, float(self.obs_clip),
                                        self.predictor_.params, self.target_.params,
                                        self.predictor_._dims)
        result = (nn.ForwardCache(self.predictor_, pbuf), diff, raw)
        self._embed_cache = (key, X, result)
        return result

    def _step(self, X, lr):
        # statistics absorb the batch after the step, so scoring and training
        # of one batch share the same normalization
        cache, diff, raw = self._embed(X)
        loss = float(raw.mean())
        if lr > 0:
            diff *= 2.0 / diff.shape[1]
            grads, _ = nn.backprop(self.predictor_, cache, diff.T)
            nn.adam_step(self.predictor_, grads, lr)
        self.normalizer_.update(X)
        self.loss_ = loss
        return loss

    def fit(self, X, y=None):
        X = check_batch(X, name="states")
        self._initialize(X.shape[1])
        for _ in range(self.max_iter):
            self._step(X, self.predictor_lr)
        return self

    def partial_fit(self, X, y=None):
        if not hasattr(self, "target_"):
            X = check_batch(X, name="states")
            self._initialize(X.shape[1])
        else:
            X = check_batch(X, self.n_features_in_, "states")
        self._step(X, self.predictor_lr)
        return self

    def score_samples(self, X):
        """Raw novelty ``||predictor(x) - target(x)||^2`` per row of ``X``."""
        self._check_fitted()
        return self._embed(check_batch(X, self.n_features_in_, "states"))[2]

    def novelty_weights(self, X) -> NoveltyWeights:
        raw = self.score_samples(X)
        std = standardize(raw)
        return NoveltyWeights(raw, std, clamp_weights(std))

    def transform(self, X):
        return _clamped(self.score_samples(X))

    def copy(self):
        est = NoveltyEstimator(**self.get_params())
        if hasattr(self, "target_"):
            est.target_ = self.target_.copy()
            est.predictor_ = self.predictor_.copy()
            est.normalizer_ = self.normalizer_.copy()
            est.n_features_in_ = self.n_features_in_
            est.loss_ = self.loss_
        return est

    def to_dict(self):
        self._check_fitted()
        return {
            "params": {k: list(v) if isinstance(v, tuple) else v for k, v in self.get_params().items()},
            "target": self.target_.to_dict(),
            "predictor": self.predictor_.to_dict(),
            "normalizer": self.normalizer_.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc):
        params = dict(doc["params"])
        params["hidden_sizes"] = tuple(params["hidden_sizes"])
        est = cls(**params)
        est.target_ = nn.Network.from_dict(doc["target"])
        est.predictor_ = nn.Network.from_dict(doc["predictor"])
        est.n_features_in_ = est.target_.in_dim
        est.normalizer_ = RunningMeanStd.from_dict(doc["normalizer"])
        est.loss_ = None
        return est


def novelty_mse(est: NoveltyEstimator, states) -> np.ndarray:
    return est.score_samples(states)


def train_predictor(est: NoveltyEstimator, states, lr: float | None = None) -> float:
    """One Adam step of the predictor toward the target; returns the pre-step loss."""
    est._check_fitted()
    X = check_batch(states, est.n_features_in_, "states")
    lr = est.predictor_lr if lr is None else lr
    if lr < 0:
        raise InvalidArgumentError("lr must be >= 0")
    return est._step(X, lr)
