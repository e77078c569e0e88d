"""Goal-conditioned DDPG with novelty-weighted actor and critic losses.

Every update takes one weight per sample. The critic minimizes
``mean_i w_i * (Q(s_i, a_i) - y_i)^2`` and the actor minimizes
``mean_i -w_i * Q(s_i, mu(s_i))``. The weights come from ``compute_weights``:

``nsr``
    clamped standardized RND novelty of the batch states.
``uniform``
    all ones, which is plain DDPG-HER. The RND model is not trained in this mode.
``mean``
    every sample gets the batch mean of the ``nsr`` weights.
``random``
    i.i.d. normal draws matching the mean and std of the ``nsr`` weights,
    clamped to [1, 3].

``reuse_count`` repeats each sampled batch that many times (the reuse baseline).

With ``normalize_inputs`` the actor and critic see states standardized by
running statistics that only change in :meth:`DDPGAgent.observe`, which the
training loop calls on freshly collected episodes. Updates never touch them.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from . import nn
from ._validation import check_batch, check_finite
from .envs import EnvSpec, GoalObservation
from .exceptions import ContractViolationError, InvalidArgumentError, NumericInputError
from .novelty import WEIGHT_MAX, WEIGHT_MIN, NoveltyEstimator, RunningMeanStd
from .replay import ReplayBuffer, TransitionBatch, sample_with_her

WEIGHT_MODES = ("nsr", "uniform", "mean", "random")


@dataclass
class UpdateMetrics:
    critic_loss: float
    actor_loss: float
    mean_weight: float
    rnd_loss: float


class DDPGAgent(BaseEstimator):
    """DDPG actor-critic over ``observation || goal`` inputs.

    Networks are built on first use from ``obs_dim``, ``goal_dim`` and
    ``action_dim``; ``random_state`` fixes their initialization. Set
    ``weighted=False`` to run the unweighted reference code path.
    """

    def __init__(self, obs_dim=6, goal_dim=3, action_dim=3, hidden_sizes=(64, 64, 64),
                 gamma=0.98, tau=0.05, actor_lr=1e-3, critic_lr=1e-3, batch_size=128,
                 future_k=4.0, action_noise_std=0.1, random_eps=0.2, clip_target=True,
                 weight_mode="nsr", reuse_count=1, weighted=True, embed_dim=32,
                 rnd_hidden_sizes=(32,), predictor_lr=1e-3, normalize_inputs=True,
                 input_clip=5.0, random_state=0):
        self.obs_dim = obs_dim
        self.goal_dim = goal_dim
        self.action_dim = action_dim
        self.hidden_sizes = hidden_sizes
        self.gamma = gamma
        self.tau = tau
        self.actor_lr = actor_lr
        self.critic_lr = critic_lr
        self.batch_size = batch_size
        self.future_k = future_k
        self.action_noise_std = action_noise_std
        self.random_eps = random_eps
        self.clip_target = clip_target
        self.weight_mode = weight_mode
        self.reuse_count = reuse_count
        self.weighted = weighted
        self.embed_dim = embed_dim
        self.rnd_hidden_sizes = rnd_hidden_sizes
        self.predictor_lr = predictor_lr
        self.normalize_inputs = normalize_inputs
        self.input_clip = input_clip
        self.random_state = random_state

    @classmethod
    def for_spec(cls, spec: EnvSpec, **params):
        return cls(obs_dim=spec.obs_dim, goal_dim=spec.goal_dim, action_dim=spec.action_dim,
                   **params).initialize()

    def _validate_params(self):
        problems = []
        if not 0 < self.gamma < 1:
            problems.append("gamma must be in (0, 1)")
        if not 0 < self.tau <= 1:
            problems.append("tau must be in (0, 1]")
        if int(self.reuse_count) < 1:
            problems.append("reuse_count must be >= 1")
        if self.weight_mode not in WEIGHT_MODES:
            problems.append(f"weight_mode must be one of {WEIGHT_MODES}")
        if problems:
            raise InvalidArgumentError("; ".join(problems))

    @property
    def state_dim(self):
        return self.obs_dim + self.goal_dim

    @property
    def uses_novelty(self):
        return self.weighted and self.weight_mode != "uniform"

    def initialize(self):
        self._validate_params()
        seeds = np.random.SeedSequence(self.random_state).generate_state(3)
        hidden = list(self.hidden_sizes)
        self.actor_ = nn.mlp_init([self.state_dim, *hidden, self.action_dim], int(seeds[0]), "tanh")
        self.critic_ = nn.mlp_init([self.state_dim + self.action_dim, *hidden, 1], int(seeds[1]))
        self.target_actor_ = self.actor_.copy()
        self.target_critic_ = self.critic_.copy()
        self.novelty_ = NoveltyEstimator(
            embed_dim=self.embed_dim, hidden_sizes=tuple(self.rnd_hidden_sizes),
            predictor_lr=self.predictor_lr, random_state=int(seeds[2]),
        )._initialize(self.state_dim)
        self.input_norm_ = RunningMeanStd(self.state_dim)
        self.n_updates_ = 0
        return self

    def observe(self, states):
        """Fold ``observation || goal`` rows into the input statistics."""
        self._ensure_initialized()
        if self.normalize_inputs:
            self.input_norm_.update(check_batch(states, self.state_dim, "states"))
        return self

    def _inputs(self, X):
        if not self.normalize_inputs:
            return X
        return self.input_norm_.normalize(X, self.input_clip)

    def _ensure_initialized(self):
        if not hasattr(self, "actor_"):
            self.initialize()

    def predict(self, states):
        """Deterministic actions for a batch of ``observation || goal`` rows."""
        self._ensure_initialized()
        X = check_batch(states, self.state_dim, "states")
        return nn.predict(self.actor_, self._inputs(X))

    def to_dict(self):
        self._ensure_initialized()
        params = {k: list(v) if isinstance(v, tuple) else v for k, v in self.get_params().items()}
        return {
            "params": params,
            "actor": self.actor_.to_dict(),
            "critic": self.critic_.to_dict(),
            "target_actor": self.target_actor_.to_dict(),
            "target_critic": self.target_critic_.to_dict(),
            "novelty": self.novelty_.to_dict(),
            "input_normalizer": self.input_norm_.to_dict(),
            "n_updates": self.n_updates_,
        }

    @classmethod
    def from_dict(cls, doc):
        params = dict(doc["params"])
        for key in ("hidden_sizes", "rnd_hidden_sizes"):
            params[key] = tuple(params[key])
        agent = cls(**params)
        agent.actor_ = nn.Network.from_dict(doc["actor"])
        agent.critic_ = nn.Network.from_dict(doc["critic"])
        agent.target_actor_ = nn.Network.from_dict(doc["target_actor"])
        agent.target_critic_ = nn.Network.from_dict(doc["target_critic"])
        agent.novelty_ = NoveltyEstimator.from_dict(doc["novelty"])
        agent.input_norm_ = RunningMeanStd.from_dict(doc["input_normalizer"])
        agent.n_updates_ = doc["n_updates"]
        return agent

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _state_of(obs):
    if isinstance(obs, GoalObservation):
        return np.concatenate([obs.observation, obs.desired_goal])
    return np.asarray(obs, dtype=np.float64)


def select_action(agent: DDPGAgent, obs, explore: bool, rng=None, random_episode=False):
    """Action for one observation (a GoalObservation or a state row).

    With ``explore`` the actor output gets N(0, action_noise_std) noise and
    is clipped to [-1, 1]; ``random_episode`` replaces it by a uniform draw.
    """
    agent._ensure_initialized()
    state = check_finite(_state_of(obs), "observation")
    single = state.ndim == 1
    X = check_batch(state, agent.state_dim, "observation")
    return _act(agent, X, explore, np.random.default_rng(rng), random_episode)[0 if single else slice(None)]


def _act(agent, X, explore, rng, random_episode=False):
    n = X.shape[0]
    actions = nn.predict(agent.actor_, agent._inputs(X))
    if not explore:
        return actions
    if agent.action_noise_std > 0:
        actions = actions + agent.action_noise_std * rng.standard_normal(actions.shape)
    actions = np.clip(actions, -1.0, 1.0)
    random_mask = np.broadcast_to(np.asarray(random_episode, dtype=bool), (n,))
    if np.any(random_mask):
        actions[random_mask] = rng.uniform(-1.0, 1.0, size=(int(random_mask.sum()), agent.action_dim))
    return actions


def compute_weights(agent: DDPGAgent, states, rng=None) -> np.ndarray:
    """Per-sample update weights in [1, 3] for the agent's ``weight_mode``."""
    agent._ensure_initialized()
    n = len(states)
    if agent.weight_mode == "uniform":
        return np.ones(n)
    nsr = agent.novelty_.transform(states)
    if agent.weight_mode == "nsr":
        return nsr
    if agent.weight_mode == "mean":
        return np.full(n, nsr.mean())
    rng = np.random.default_rng(rng)
    return np.clip(rng.normal(nsr.mean(), nsr.std(), size=n), WEIGHT_MIN, WEIGHT_MAX)


def _check_batch_finite(batch):
    for name in ("obs", "actions", "rewards", "next_obs", "desired_goals"):
        if not np.all(np.isfinite(getattr(batch, name))):
            raise NumericInputError(f"batch field {name} contains NaN or infinite values")


def td_targets(agent: DDPGAgent, batch: TransitionBatch) -> np.ndarray:
    """``r + gamma * (1 - done) * Q'(s', mu'(s'))`` from the target networks."""
    S2 = agent._inputs(batch.next_states)
    a2 = nn.predict(agent.target_actor_, S2)
    q2 = nn.predict(agent.target_critic_, np.concatenate([S2, a2], axis=1))[:, 0]
    y = batch.rewards + agent.gamma * (1.0 - batch.dones) * q2
    if agent.clip_target:
        y = np.clip(y, -1.0 / (1.0 - agent.gamma), 0.0)
    return y


def compute_gradients(agent: DDPGAgent, batch: TransitionBatch, weights=None):
    """Critic and actor gradients at the current parameters, before any step.

    Returns ``(critic_grads, actor_grads, critic_loss, actor_loss)``.
    ``weights=None`` skips every multiplication by the weights.
    """
    S = agent._inputs(batch.states)
    y = td_targets(agent, batch)

    q, c_cache = nn.forward_cache(agent.critic_, np.concatenate([S, batch.actions], axis=1))
    grad_q, critic_loss = nn.mse_grad(q - y[:, None], weights)
    critic_grads, _ = nn.backprop(agent.critic_, c_cache, grad_q)

    pi, a_cache = nn.forward_cache(agent.actor_, S)
    q_pi, pi_cache = nn.forward_cache(agent.critic_, np.concatenate([S, pi], axis=1))
    grad_qpi, actor_loss = nn.neg_mean_grad(q_pi, weights)
    _, grad_in = nn.backprop(agent.critic_, pi_cache, grad_qpi, param_grads=False, input_grad=True)
    actor_grads, _ = nn.backprop(agent.actor_, a_cache, grad_in[:, agent.state_dim:])
    return critic_grads, actor_grads, critic_loss, actor_loss


def update(agent: DDPGAgent, batch: TransitionBatch, weights=None) -> UpdateMetrics:
    """One weighted DDPG step on ``batch``, then target blending and an RND step."""
    agent._ensure_initialized()
    _check_batch_finite(batch)
    n = len(batch)
    if weights is not None:
        w = check_finite(weights, "weights").reshape(-1)
        if w.shape[0] != n:
            raise InvalidArgumentError(f"got {w.shape[0]} weights for a batch of {n}")
        if np.any(w < WEIGHT_MIN) or np.any(w > WEIGHT_MAX):
            raise ContractViolationError("update weights must lie in [1, 3]")
        mean_weight = float(w.mean())
    else:
        w = None
        mean_weight = 1.0

    critic_grads, actor_grads, critic_loss, actor_loss = compute_gradients(agent, batch, w)
    nn.adam_step(agent.critic_, critic_grads, agent.critic_lr)
    nn.adam_step(agent.actor_, actor_grads, agent.actor_lr)
    nn.soft_update(agent.target_critic_, agent.critic_, agent.tau)
    nn.soft_update(agent.target_actor_, agent.actor_, agent.tau)

    rnd_loss = 0.0
    if agent.uses_novelty:
        rnd_loss = agent.novelty_._step(batch.states, agent.predictor_lr)
    agent.n_updates_ += 1
    return UpdateMetrics(critic_loss, actor_loss, mean_weight, rnd_loss)


def update_cycle(agent: DDPGAgent, buffer: ReplayBuffer, n_batches: int, rng=None):
    """Sample ``n_batches`` HER batches and apply ``update`` ``reuse_count`` times to each.

    Weights are recomputed before every ``update`` call.
    """
    if n_batches < 1:
        raise InvalidArgumentError("n_batches must be >= 1")
    agent._ensure_initialized()
    rng = np.random.default_rng(rng)
    metrics = []
    for _ in range(n_batches):
        batch = sample_with_her(buffer, agent.batch_size, agent.future_k, rng)
        for _ in range(agent.reuse_count):
            w = compute_weights(agent, batch.states, rng) if agent.weighted else None
            metrics.append(update(agent, batch, w))
    return metrics
