"""Kinematic goal-conditioned manipulation tasks with Fetch-style sparse rewards.

Three tasks share one state layout:

* ``reach``: move the gripper to a 3-D goal. Observation is gripper position
  and velocity (6 values); the achieved goal is the gripper position.
* ``push``: an object rests on the table (the workspace floor). While the
  gripper is within ``contact_radius`` of it, the object is dragged along the
  horizontal part of the gripper displacement. Goals lie on the table.
* ``pick_and_place``: the object attaches when the gripper is within
  ``grasp_radius`` and the gripper command (4th action entry) exceeds 0.5, then
  follows the gripper; releasing drops it back to the table. Half of the goals
  are in the air.

Push/pick observations are gripper position, object position, object relative
to gripper, gripper velocity and object velocity (15 values); pick adds a grasp
flag. Episodes have a fixed horizon and ``done`` only marks the time limit.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_finite
from .exceptions import ContractViolationError, InvalidArgumentError

TASKS = ("reach", "push", "pick_and_place")

_DEFAULT_BOUNDS = {
    "reach": ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0)),
    # objects and goals within 0.15 of the start column, as in the Fetch tasks
    "push": ((0.35, 0.35, 0.0), (0.65, 0.65, 0.2)),
    "pick_and_place": ((0.35, 0.35, 0.0), (0.65, 0.65, 0.2)),
}
_MAX_RESET_TRIES = 1000


@dataclass(frozen=True)
class EnvSpec:
    task: str = "reach"
    workspace_low: tuple = None
    workspace_high: tuple = None
    max_episode_steps: int = 30
    success_threshold: float = 0.05
    action_scale: float = 0.05
    contact_radius: float = 0.05
    grasp_radius: float = 0.05

    def __post_init__(self):
        if self.task not in TASKS:
            raise InvalidArgumentError(f"unknown task {self.task!r}; choose from {TASKS}")
        low, high = _DEFAULT_BOUNDS[self.task]
        if self.workspace_low is None:
            object.__setattr__(self, "workspace_low", low)
        if self.workspace_high is None:
            object.__setattr__(self, "workspace_high", high)
        object.__setattr__(self, "workspace_low", tuple(float(v) for v in self.workspace_low))
        object.__setattr__(self, "workspace_high", tuple(float(v) for v in self.workspace_high))
        problems = self.violations()
        if problems:
            raise InvalidArgumentError("; ".join(problems))

    def violations(self):
        out = []
        if int(self.max_episode_steps) < 1:
            out.append("max_episode_steps must be >= 1")
        if not self.success_threshold > 0:
            out.append("success_threshold must be > 0")
        if not self.action_scale > 0:
            out.append("action_scale must be > 0")
        if len(self.workspace_low) != 3 or len(self.workspace_high) != 3:
            out.append("workspace bounds must be 3-D")
        elif any(lo >= hi for lo, hi in zip(self.workspace_low, self.workspace_high)):
            out.append("workspace_low must be below workspace_high on every axis")
        return out

    @property
    def action_dim(self) -> int:
        return 3 if self.task == "reach" else 4

    @property
    def obs_dim(self) -> int:
        return {"reach": 6, "push": 15, "pick_and_place": 16}[self.task]

    @property
    def goal_dim(self) -> int:
        return 3

    @property
    def low(self):
        return np.asarray(self.workspace_low)

    @property
    def high(self):
        return np.asarray(self.workspace_high)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["workspace_low"] = list(self.workspace_low)
        d["workspace_high"] = list(self.workspace_high)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class GoalObservation:
    observation: np.ndarray
    achieved_goal: np.ndarray
    desired_goal: np.ndarray

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in ("observation", "achieved_goal", "desired_goal")}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: np.asarray(v, dtype=np.float64) for k, v in d.items()})


@dataclass
class Transition:
    state: GoalObservation
    action: np.ndarray
    reward: float
    next_state: GoalObservation
    done: bool
    success: bool

    def to_dict(self):
        return {
            "state": self.state.to_dict(),
            "action": self.action.tolist(),
            "reward": self.reward,
            "next_state": self.next_state.to_dict(),
            "done": self.done,
            "success": self.success,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            state=GoalObservation.from_dict(d["state"]),
            action=np.asarray(d["action"], dtype=np.float64),
            reward=float(d["reward"]),
            next_state=GoalObservation.from_dict(d["next_state"]),
            done=bool(d["done"]),
            success=bool(d["success"]),
        )


@dataclass
class EnvState:
    spec: EnvSpec
    gripper: np.ndarray
    goal: np.ndarray
    object: np.ndarray | None = None
    gripper_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    object_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    grasped: bool = False
    t: int = 0

    @property
    def done(self):
        return self.t >= self.spec.max_episode_steps

    def achieved_goal(self):
        return (self.gripper if self.object is None else self.object).copy()

    def observe(self) -> GoalObservation:
        if self.object is None:
            obs = np.concatenate([self.gripper, self.gripper_vel])
        else:
            parts = [self.gripper, self.object, self.object - self.gripper,
                     self.gripper_vel, self.object_vel]
            if self.spec.task == "pick_and_place":
                parts.append([1.0 if self.grasped else 0.0])
            obs = np.concatenate(parts)
        return GoalObservation(obs, self.achieved_goal(), self.goal.copy())


def goal_distance(achieved, desired):
    return np.linalg.norm(np.asarray(achieved) - np.asarray(desired), axis=-1)


def compute_reward(achieved, desired, threshold: float):
    """0 when within ``threshold`` (inclusive) of the goal, else -1.

    Works on single goals and on batches (last axis is the goal vector).
    """
    a = np.asarray(achieved, dtype=np.float64)
    d = np.asarray(desired, dtype=np.float64)
    if a.shape != d.shape:
        raise InvalidArgumentError(f"goal shapes differ: {a.shape} vs {d.shape}")
    if not threshold > 0:
        raise InvalidArgumentError("threshold must be > 0")
    r = np.where(goal_distance(a, d) <= threshold, 0.0, -1.0)
    return float(r) if r.ndim == 0 else r


def start_position(spec: EnvSpec):
    low, high = spec.low, spec.high
    start = (low + high) / 2.0
    if spec.task != "reach":
        start[2] = low[2] + 0.05 * (high[2] - low[2])
    return start


def _sample_goal(spec, rng, table_z):
    low, high = spec.low, spec.high
    goal = rng.uniform(low, high)
    if spec.task == "push" or (spec.task == "pick_and_place" and rng.random() < 0.5):
        goal[2] = table_z
    return goal


def reset(spec: EnvSpec, seed: int):
    """Start an episode; returns ``(EnvState, GoalObservation)``.

    Object and goal are drawn uniformly from the workspace with
    ``np.random.default_rng(seed)``; draws are rejected until the goal is
    farther than ``success_threshold`` from the achieved goal.
    """
    rng = np.random.default_rng(seed)
    low, high = spec.low, spec.high
    gripper = start_position(spec)
    table_z = low[2]
    for _ in range(_MAX_RESET_TRIES):
        obj = None
        if spec.task != "reach":
            obj = rng.uniform(low, high)
            obj[2] = table_z
        goal = _sample_goal(spec, rng, table_z)
        achieved = gripper if obj is None else obj
        if goal_distance(achieved, goal) > spec.success_threshold:
            break
    else:  # pragma: no cover - needs a workspace smaller than the threshold
        raise InvalidArgumentError("could not sample a goal away from the start")
    state = EnvState(spec, gripper, goal, obj)
    return state, state.observe()


def step(state: EnvState, action):
    """Advance one step; returns ``(EnvState, Transition)`` and leaves ``state`` untouched."""
    if state.done:
        raise ContractViolationError("step called on a finished episode")
    spec = state.spec
    a = np.clip(check_finite(action, "action").reshape(-1), -1.0, 1.0)
    if a.shape[0] != spec.action_dim:
        raise InvalidArgumentError(f"action must have {spec.action_dim} entries")
    low, high = spec.low, spec.high
    before = state.observe()

    gripper = np.clip(state.gripper + spec.action_scale * a[:3], low, high)
    disp = gripper - state.gripper
    obj = None if state.object is None else state.object.copy()
    grasped = False
    if spec.task == "push":
        if goal_distance(state.gripper, obj) <= spec.contact_radius:
            obj[:2] = np.clip(obj[:2] + disp[:2], low[:2], high[:2])
    elif spec.task == "pick_and_place":
        close = goal_distance(state.gripper, obj) <= spec.grasp_radius
        grasped = bool(a[3] > 0.5 and (state.grasped or close))
        if grasped:
            obj = np.clip(obj + disp, low, high)
        else:
            obj[2] = low[2]
    new = EnvState(
        spec=spec,
        gripper=gripper,
        goal=state.goal,
        object=obj,
        gripper_vel=disp,
        object_vel=np.zeros(3) if obj is None else obj - state.object,
        grasped=grasped,
        t=state.t + 1,
    )
    after = new.observe()
    reward = compute_reward(after.achieved_goal, after.desired_goal, spec.success_threshold)
    transition = Transition(before, a, reward, after, new.done, reward == 0.0)
    return new, transition


def dump_trajectory(transitions, path) -> None:
    """Write transitions as JSON lines, one per line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tr in transitions:
            fh.write(json.dumps(tr.to_dict()) + "\n")


def load_trajectory(path):
    with open(path, encoding="utf-8") as fh:
        return [Transition.from_dict(json.loads(line)) for line in fh if line.strip()]
