"""Episode replay storage with hindsight ("future" strategy) goal relabeling."""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .envs import EnvSpec, GoalObservation, Transition, compute_reward
from .exceptions import EmptyBufferError, InvalidArgumentError


@dataclass
class TransitionBatch:
    """Parallel arrays for one sampled minibatch (goals already relabeled)."""

    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    desired_goals: np.ndarray
    achieved_goals: np.ndarray
    next_achieved_goals: np.ndarray
    dones: np.ndarray
    relabeled: np.ndarray
    episode_idx: np.ndarray
    t_idx: np.ndarray

    def __len__(self):
        return self.rewards.shape[0]

    @cached_property
    def states(self):
        """Goal-conditioned input ``observation || desired_goal`` for each element."""
        return np.concatenate([self.obs, self.desired_goals], axis=1)

    @cached_property
    def next_states(self):
        return np.concatenate([self.next_obs, self.desired_goals], axis=1)


class ReplayBuffer:
    """FIFO store of whole fixed-length episodes.

    ``ReplayBuffer(capacity, T, obs_dim, action_dim)`` keeps at most
    ``capacity`` episodes of exactly ``T`` transitions each. Internally every
    episode is a row of preallocated arrays; ``observations`` and
    ``achieved_goals`` hold ``T + 1`` entries (the final next-state included).
    """

    def __init__(self, capacity, max_episode_steps, obs_dim, action_dim, goal_dim=3,
                 success_threshold=0.05):
        if capacity < 1 or max_episode_steps < 1:
            raise InvalidArgumentError("capacity and max_episode_steps must be >= 1")
        self.capacity = int(capacity)
        self.T = int(max_episode_steps)
        self.success_threshold = float(success_threshold)
        T = self.T
        self._obs = np.zeros((capacity, T + 1, obs_dim))
        self._ag = np.zeros((capacity, T + 1, goal_dim))
        self._g = np.zeros((capacity, T, goal_dim))
        self._actions = np.zeros((capacity, T, action_dim))
        self._rewards = np.zeros((capacity, T))
        self._dones = np.zeros((capacity, T), dtype=bool)
        self._success = np.zeros((capacity, T), dtype=bool)
        self._next = 0
        self.size = 0

    @classmethod
    def for_spec(cls, spec: EnvSpec, capacity=1000):
        return cls(capacity, spec.max_episode_steps, spec.obs_dim, spec.action_dim,
                   spec.goal_dim, spec.success_threshold)

    def _slot(self, i):
        """Ring slot of the ``i``-th stored episode, oldest first."""
        if not 0 <= i < self.size:
            raise InvalidArgumentError(f"episode index {i} out of range [0, {self.size})")
        oldest = (self._next - self.size) % self.capacity
        return (oldest + i) % self.capacity

    def store_episode(self, episode) -> None:
        if len(episode) != self.T:
            raise InvalidArgumentError(f"episode has {len(episode)} transitions, expected {self.T}")
        k = self._next
        for t, tr in enumerate(episode):
            self._obs[k, t] = tr.state.observation
            self._ag[k, t] = tr.state.achieved_goal
            self._g[k, t] = tr.state.desired_goal
            self._actions[k, t] = tr.action
            self._rewards[k, t] = tr.reward
            self._dones[k, t] = tr.done
            self._success[k, t] = tr.success
        self._obs[k, self.T] = episode[-1].next_state.observation
        self._ag[k, self.T] = episode[-1].next_state.achieved_goal
        self._next = (k + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def episode(self, i):
        """Rebuild the ``i``-th stored episode (0 = oldest) as Transitions."""
        k = self._slot(i)
        out = []
        for t in range(self.T):
            g = self._g[k, t].copy()
            g_next = self._g[k, t + 1].copy() if t + 1 < self.T else g.copy()
            out.append(Transition(
                state=GoalObservation(self._obs[k, t].copy(), self._ag[k, t].copy(), g),
                action=self._actions[k, t].copy(),
                reward=float(self._rewards[k, t]),
                next_state=GoalObservation(self._obs[k, t + 1].copy(),
                                           self._ag[k, t + 1].copy(), g_next),
                done=bool(self._dones[k, t]),
                success=bool(self._success[k, t]),
            ))
        return out

    def dump_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for i in range(self.size):
                fh.write(json.dumps([tr.to_dict() for tr in self.episode(i)]) + "\n")


def store_episode(buffer: ReplayBuffer, episode) -> None:
    buffer.store_episode(episode)


def her_relabel(episode, t: int, future_index: int, threshold: float) -> Transition:
    """Copy of ``episode[t]`` aimed at the goal achieved after step ``future_index``."""
    n = len(episode)
    if not (0 <= t <= future_index < n):
        raise InvalidArgumentError(f"need 0 <= t <= future_index < {n}, got t={t}, future={future_index}")
    tr = episode[t]
    goal = np.array(episode[future_index].next_state.achieved_goal, dtype=np.float64)
    state = GoalObservation(tr.state.observation.copy(), tr.state.achieved_goal.copy(), goal.copy())
    nxt = GoalObservation(tr.next_state.observation.copy(), tr.next_state.achieved_goal.copy(), goal)
    reward = compute_reward(nxt.achieved_goal, goal, threshold)
    return Transition(state, tr.action.copy(), reward, nxt, tr.done, reward == 0.0)


def sample_with_her(buffer: ReplayBuffer, batch_size: int, future_k: float = 4.0,
                    rng=None) -> TransitionBatch:
    """Draw ``batch_size`` transitions uniformly, relabeling each with probability
    ``future_k / (future_k + 1)`` to an achieved goal from the same or a later step.

    ``rng`` is a seed or a ``np.random.Generator``. The buffer is not modified.
    """
    if buffer.size == 0:
        raise EmptyBufferError("cannot sample from an empty replay buffer")
    if batch_size < 1 or future_k < 0:
        raise InvalidArgumentError("batch_size must be >= 1 and future_k >= 0")
    rng = np.random.default_rng(rng)
    T = buffer.T
    ep = rng.integers(0, buffer.size, size=batch_size)
    slots = (buffer._next - buffer.size + ep) % buffer.capacity
    t = rng.integers(0, T, size=batch_size)
    relabel = rng.random(batch_size) < future_k / (future_k + 1.0)
    future = rng.integers(t, T)

    goals = buffer._g[slots, t].copy()
    next_ag = buffer._ag[slots, t + 1]
    rewards = buffer._rewards[slots, t].copy()
    if np.any(relabel):
        goals[relabel] = buffer._ag[slots[relabel], future[relabel] + 1]
        rewards[relabel] = compute_reward(next_ag[relabel], goals[relabel], buffer.success_threshold)
    return TransitionBatch(
        obs=buffer._obs[slots, t],
        actions=buffer._actions[slots, t],
        rewards=rewards,
        next_obs=buffer._obs[slots, t + 1],
        desired_goals=goals,
        achieved_goals=buffer._ag[slots, t],
        next_achieved_goals=next_ag,
        dones=np.zeros(batch_size, dtype=bool),
        relabeled=relabel,
        episode_idx=ep,
        t_idx=t,
    )
