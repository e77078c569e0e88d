"""Novelty-guided sample reuse for goal-conditioned DDPG with hindsight replay."""

__version__ = "0.1.0"

from .agent import DDPGAgent, UpdateMetrics, compute_weights, select_action, update, update_cycle
from .envs import EnvSpec, GoalObservation, Transition, compute_reward, reset, step
from .novelty import NoveltyEstimator, normalize_and_clamp, novelty_mse, train_predictor
from .replay import ReplayBuffer, TransitionBatch, her_relabel, sample_with_her, store_episode
from .runner import RunConfig, RunReport, emit_metrics, evaluate, run_experiment

__all__ = [
    "DDPGAgent", "UpdateMetrics", "compute_weights", "select_action", "update", "update_cycle",
    "EnvSpec", "GoalObservation", "Transition", "compute_reward", "reset", "step",
    "NoveltyEstimator", "normalize_and_clamp", "novelty_mse", "train_predictor",
    "ReplayBuffer", "TransitionBatch", "her_relabel", "sample_with_her", "store_episode",
    "RunConfig", "RunReport", "emit_metrics", "evaluate", "run_experiment",
]
