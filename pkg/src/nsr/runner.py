"""Seeded training runs: epochs of collect/store/update cycles plus evaluation.

Each run directory holds ``config.json``, ``metrics.csv`` (one row per seed
and epoch) and ``summary.csv`` (per-epoch mean and std of success across
seeds).
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .agent import WEIGHT_MODES, DDPGAgent, _act, update_cycle
from .envs import TASKS, EnvSpec, reset, step
from .exceptions import ConfigValidationError
from .replay import ReplayBuffer

log = logging.getLogger(__name__)

METRICS_HEADER = ["seed", "epoch", "success_rate", "mean_return", "mean_weight", "epoch_seconds"]
SUMMARY_HEADER = ["epoch", "success_rate_mean", "success_rate_std", "n_seeds"]
_SEED_STRIDE = 1_000_003


@dataclass
class RunConfig:
    env: EnvSpec = field(default_factory=EnvSpec)
    weight_mode: str = "nsr"
    reuse_count: int = 1
    epochs: int = 30
    cycles_per_epoch: int = 10
    episodes_per_cycle: int = 4
    updates_per_cycle: int = 40
    eval_episodes: int = 20
    batch_size: int = 128
    gamma: float = 0.98
    tau: float = 0.05
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    action_noise_std: float = 0.1
    random_eps: float = 0.2
    future_k: float = 4.0
    buffer_capacity: int = 1000
    hidden_sizes: tuple = (64, 64, 64)
    embed_dim: int = 32
    rnd_hidden_sizes: tuple = (32,)
    predictor_lr: float = 1e-3
    normalize_inputs: bool = True
    weighted: bool = True
    seeds: tuple = (0, 1, 2, 3, 4)
    out_dir: str | None = None
    group: str = "custom"
    name: str | None = None

    def __post_init__(self):
        if isinstance(self.env, dict):
            self.env = EnvSpec.from_dict(self.env)
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        self.rnd_hidden_sizes = tuple(int(h) for h in self.rnd_hidden_sizes)
        self.seeds = tuple(int(s) for s in self.seeds)
        if self.name is None:
            self.name = f"{self.env.task}-{self.weight_mode}-reuse{self.reuse_count}"

    def violations(self):
        out = list(self.env.violations())
        for key in ("reuse_count", "epochs", "cycles_per_epoch", "episodes_per_cycle",
                    "updates_per_cycle", "eval_episodes", "batch_size", "buffer_capacity",
                    "embed_dim"):
            if int(getattr(self, key)) < 1:
                out.append(f"{key} must be >= 1")
        if self.weight_mode not in WEIGHT_MODES:
            out.append(f"weight_mode must be one of {list(WEIGHT_MODES)}")
        if not 0 < self.gamma < 1:
            out.append("gamma must be in (0, 1)")
        if not 0 < self.tau <= 1:
            out.append("tau must be in (0, 1]")
        for key in ("actor_lr", "critic_lr", "predictor_lr"):
            if not getattr(self, key) > 0:
                out.append(f"{key} must be > 0")
        if self.action_noise_std < 0 or not 0 <= self.random_eps <= 1 or self.future_k < 0:
            out.append("action_noise_std and future_k must be >= 0, random_eps in [0, 1]")
        if not self.seeds:
            out.append("seeds must be nonempty")
        if any(s < 0 for s in self.seeds):
            out.append("seeds must be unsigned")
        return out

    def validate(self):
        problems = self.violations()
        if problems:
            raise ConfigValidationError(problems)
        return self

    def agent_params(self):
        return dict(
            hidden_sizes=self.hidden_sizes, gamma=self.gamma, tau=self.tau,
            actor_lr=self.actor_lr, critic_lr=self.critic_lr, batch_size=self.batch_size,
            future_k=self.future_k, action_noise_std=self.action_noise_std,
            random_eps=self.random_eps, weight_mode=self.weight_mode,
            reuse_count=self.reuse_count, embed_dim=self.embed_dim,
            rnd_hidden_sizes=self.rnd_hidden_sizes, predictor_lr=self.predictor_lr,
            normalize_inputs=self.normalize_inputs, weighted=self.weighted,
        )

    def run_dir(self):
        if self.out_dir is None:
            return None
        return Path(self.out_dir) / self.group / self.name

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["env"] = self.env.to_dict()
        for key in ("hidden_sizes", "rnd_hidden_sizes", "seeds"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigValidationError([f"unknown config key {k!r}" for k in unknown])
        return cls(**d)


@dataclass
class EpochRecord:
    seed: int
    epoch: int
    success_rate: float
    mean_return: float
    mean_weight: float
    epoch_seconds: float


@dataclass
class RunReport:
    config: RunConfig
    records: list
    version: str = __version__

    def seeds(self):
        return sorted({r.seed for r in self.records})

    def success_matrix(self):
        """Array of shape (n_seeds, n_epochs) with evaluation success rates."""
        by_seed = {}
        for r in self.records:
            by_seed.setdefault(r.seed, {})[r.epoch] = r.success_rate
        return np.array([[by_seed[s][e] for e in sorted(by_seed[s])] for s in sorted(by_seed)])

    def mean_success(self):
        return self.success_matrix().mean(axis=0)

    def epoch_seconds(self):
        return np.array([r.epoch_seconds for r in self.records])

    def first_epoch_reaching(self, level):
        """First epoch whose seed-mean success is >= ``level``; None if never."""
        hits = np.nonzero(self.mean_success() >= level)[0]
        return int(hits[0]) if hits.size else None


def _train_reset_seed(seed, j):
    return (2 * (seed * _SEED_STRIDE + j)) % 2**32


def _eval_reset_seed(seed, j):
    # odd, so never equal to a training reset seed
    return (2 * (seed * _SEED_STRIDE + j) + 1) % 2**32


def _rollout(agent, spec, reset_seeds, explore, rng=None, random_eps=0.0):
    """Run one episode per reset seed in lockstep with a batched actor.

    Returns ``(episodes, successes, returns)``.
    """
    n = len(reset_seeds)
    states, obs = zip(*(reset(spec, s) for s in reset_seeds))
    states, obs = list(states), list(obs)
    random_episode = rng.random(n) < random_eps if explore else np.zeros(n, dtype=bool)
    episodes = [[] for _ in range(n)]
    success = np.zeros(n, dtype=bool)
    returns = np.zeros(n)
    for _ in range(spec.max_episode_steps):
        X = np.stack([np.concatenate([o.observation, o.desired_goal]) for o in obs])
        actions = _act(agent, X, explore, rng, random_episode)
        for i in range(n):
            states[i], tr = step(states[i], actions[i])
            episodes[i].append(tr)
            obs[i] = tr.next_state
            success[i] |= tr.success
            returns[i] += tr.reward
    return episodes, success, returns


def _episode_states(episode):
    """Input rows for the agent's normalizer: each observation paired with the
    episode goal and with the goal achieved right after it, since hindsight
    relabeling trains on both kinds."""
    obs = np.stack([tr.state.observation for tr in episode])
    desired = np.stack([tr.state.desired_goal for tr in episode])
    achieved = np.stack([tr.next_state.achieved_goal for tr in episode])
    return np.concatenate([np.hstack([obs, desired]), np.hstack([obs, achieved])])


def _evaluate(agent, spec, n_episodes, seed):
    seeds = [_eval_reset_seed(seed, j) for j in range(n_episodes)]
    _, success, returns = _rollout(agent, spec, seeds, explore=False)
    return float(success.mean()), float(returns.mean())


def evaluate(agent: DDPGAgent, spec: EnvSpec, n_episodes: int, seed: int = 0) -> float:
    """Fraction of deterministic episodes that reach the goal at any step.

    Evaluation reset seeds are odd and training reset seeds are even, so the
    two never coincide.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    agent._ensure_initialized()
    return _evaluate(agent, spec, n_episodes, seed)[0]


def iter_epochs(config: RunConfig, seed: int):
    """Train one agent from scratch, yielding ``(EpochRecord, agent)`` after each epoch.

    Callers may interleave several of these generators; each owns its agent,
    buffer and RNG streams, so interleaving does not change any result.
    """
    spec = config.env
    agent_seed, update_seed, explore_seed = np.random.SeedSequence(seed).generate_state(3)
    agent = DDPGAgent.for_spec(spec, random_state=int(agent_seed), **config.agent_params())
    buffer = ReplayBuffer.for_spec(spec, config.buffer_capacity)
    update_rng = np.random.default_rng(update_seed)
    explore_rng = np.random.default_rng(explore_seed)
    n_episodes = 0
    for epoch in range(config.epochs):
        start = time.perf_counter()
        weights = []
        for _ in range(config.cycles_per_epoch):
            reset_seeds = [_train_reset_seed(seed, n_episodes + j)
                           for j in range(config.episodes_per_cycle)]
            n_episodes += config.episodes_per_cycle
            episodes, _, _ = _rollout(agent, spec, reset_seeds, True, explore_rng, config.random_eps)
            for ep in episodes:
                buffer.store_episode(ep)
                agent.observe(_episode_states(ep))
            metrics = update_cycle(agent, buffer, config.updates_per_cycle, update_rng)
            weights.extend(m.mean_weight for m in metrics)
        success, mean_return = _evaluate(agent, spec, config.eval_episodes, seed * _SEED_STRIDE + epoch)
        elapsed = time.perf_counter() - start
        log.info("%s seed=%d epoch=%d success=%.3f (%.2fs)", config.name, seed, epoch, success, elapsed)
        yield EpochRecord(seed, epoch, success, mean_return, float(np.mean(weights)), elapsed), agent


def run_seed(config: RunConfig, seed: int, return_agent: bool = False):
    """Train one agent from scratch; returns its list of EpochRecord.

    With ``return_agent`` the trained agent comes back as a second value.
    """
    records, agent = [], None
    for record, agent in iter_epochs(config, seed):
        records.append(record)
    return (records, agent) if return_agent else records


def run_experiment(config: RunConfig, jobs: int = 1) -> RunReport:
    """Train every seed of ``config``; writes the run directory when ``out_dir`` is set.

    ``jobs > 1`` trains seeds in worker processes; results do not depend on it.
    """
    config.validate()
    run_dir = config.run_dir()
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
    if jobs > 1 and len(config.seeds) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_seed = list(pool.map(run_seed, [config] * len(config.seeds), config.seeds))
    else:
        per_seed = [run_seed(config, s) for s in config.seeds]
    report = RunReport(config, [r for recs in per_seed for r in recs])
    if run_dir is not None:
        emit_metrics(report, run_dir)
    return report


def _fmt(x):
    return repr(float(x))


def metrics_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for r in report.records:
        w.writerow([r.seed, r.epoch, _fmt(r.success_rate), _fmt(r.mean_return),
                    _fmt(r.mean_weight), _fmt(r.epoch_seconds)])
    return buf.getvalue()


def summary_csv(report: RunReport) -> str:
    by_epoch = {}
    for r in report.records:
        by_epoch.setdefault(r.epoch, []).append(r.success_rate)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for epoch in sorted(by_epoch):
        vals = np.array(by_epoch[epoch])
        w.writerow([epoch, _fmt(vals.mean()), _fmt(vals.std()), len(vals)])
    return buf.getvalue()


def emit_metrics(report: RunReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"version": report.version, "config": report.config.to_dict()}
    for fname, text in (
        ("config.json", json.dumps(doc, indent=2) + "\n"),
        ("metrics.csv", metrics_csv(report)),
        ("summary.csv", summary_csv(report)),
    ):
        with open(out / fname, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def read_metrics(path):
    """Parse a ``metrics.csv`` back into EpochRecords."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [EpochRecord(int(r["seed"]), int(r["epoch"]), float(r["success_rate"]),
                        float(r["mean_return"]), float(r["mean_weight"]),
                        float(r["epoch_seconds"])) for r in rows]


def preset_configs(preset: str, base: RunConfig | None = None):
    """Expand a named experiment into its list of RunConfigs.

    ``fig3``: nsr and uniform on all three tasks. ``fig4``: uniform with reuse
    1/2/3/5 and nsr on push. ``fig5``: nsr, mean and random weights on reach.
    """
    base = base or RunConfig()

    def make(task, mode, reuse=1):
        env = dataclasses.replace(base.env, task=task, workspace_low=None, workspace_high=None) \
            if task != base.env.task else base.env
        cfg = dataclasses.replace(base, env=env, weight_mode=mode, reuse_count=reuse,
                                  group=preset, name=f"{task}-{mode}-reuse{reuse}")
        return cfg

    if preset == "fig3":
        return [make(task, mode) for task in TASKS for mode in ("nsr", "uniform")]
    if preset == "fig4":
        task = base.env.task if base.env.task != "reach" else "push"
        return [make(task, "uniform", k) for k in (1, 2, 3, 5)] + [make(task, "nsr")]
    if preset == "fig5":
        return [make(base.env.task, mode) for mode in ("nsr", "mean", "random")]
    raise ConfigValidationError([f"unknown preset {preset!r}; choose fig3, fig4 or fig5"])
