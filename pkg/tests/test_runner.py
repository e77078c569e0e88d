import dataclasses

import numpy as np
import pytest

from conftest import hand_net

from nsr.agent import DDPGAgent
from nsr.envs import EnvSpec, reset, step
from nsr.exceptions import ConfigValidationError
from nsr.runner import (
    METRICS_HEADER, RunConfig, evaluate, metrics_csv, preset_configs, read_metrics, run_experiment,
    run_seed, summary_csv,
)


def tiny(**kw):
    base = dict(env=EnvSpec(task="reach", max_episode_steps=10), epochs=3, cycles_per_epoch=2,
                episodes_per_cycle=2, updates_per_cycle=5, eval_episodes=5, batch_size=32,
                hidden_sizes=(16, 16), seeds=(0, 1))
    base.update(kw)
    return RunConfig(**base)


def strip_timing(text):
    return [row.rsplit(",", 1)[0] for row in text.splitlines()]


@pytest.fixture(scope="module")
def report():
    return run_experiment(tiny())


def test_counts_and_header(report):
    metrics = metrics_csv(report).splitlines()
    summary = summary_csv(report).splitlines()
    assert metrics[0] == ",".join(METRICS_HEADER)
    assert metrics[0] == "seed,epoch,success_rate,mean_return,mean_weight,epoch_seconds"
    assert len(metrics) == 1 + 6 and len(summary) == 1 + 3
    assert [r.epoch for r in report.records if r.seed == 0] == [0, 1, 2]
    assert all(0.0 <= r.success_rate <= 1.0 and 1.0 <= r.mean_weight <= 3.0 for r in report.records)


def test_summary_is_mean_of_seeds(report):
    rows = [line.split(",") for line in summary_csv(report).splitlines()[1:]]
    for epoch, mean, std, n in rows:
        vals = [r.success_rate for r in report.records if r.epoch == int(epoch)]
        assert float(mean) == np.mean(vals) and float(std) == np.std(vals) and int(n) == 2


def test_emit_and_roundtrip(tmp_path):
    cfg = tiny(out_dir=str(tmp_path), seeds=(3,), epochs=2)
    rep = run_experiment(cfg)
    run_dir = tmp_path / "custom" / "reach-nsr-reuse1"
    assert sorted(p.name for p in run_dir.iterdir()) == ["config.json", "metrics.csv", "summary.csv"]
    assert read_metrics(run_dir / "metrics.csv") == rep.records
    raw = (run_dir / "metrics.csv").read_bytes()
    assert b"\r" not in raw
    loaded = RunConfig.from_dict(__import__("json").loads((run_dir / "config.json").read_text())["config"])
    assert loaded == cfg


def test_deterministic_and_independent_of_jobs(report):
    again = run_experiment(tiny(), jobs=2)
    assert strip_timing(metrics_csv(again)) == strip_timing(metrics_csv(report))


def test_single_epoch_counting():
    rep = run_experiment(tiny(epochs=1, cycles_per_epoch=1, episodes_per_cycle=2, eval_episodes=4))
    assert [(r.seed, r.epoch) for r in rep.records] == [(0, 0), (1, 0)]


def test_return_agent():
    records, agent = run_seed(tiny(epochs=1), 0, return_agent=True)
    assert len(records) == 1 and isinstance(agent, DDPGAgent) and agent.n_updates_ == 10


def random_policy_success(spec, n, seed):
    rng = np.random.default_rng(seed)
    hits = 0
    for j in range(n):
        state, _ = reset(spec, 10_000 + j)
        done = False
        for _ in range(spec.max_episode_steps):
            state, tr = step(state, rng.uniform(-1, 1, spec.action_dim))
            done |= tr.success
        hits += done
    return hits / n


def test_untrained_agent_near_chance():
    spec = EnvSpec(task="reach")
    chance = random_policy_success(spec, 400, 0)
    assert chance < 0.3
    rates = [evaluate(DDPGAgent.for_spec(spec, random_state=s), spec, 50, seed=s) for s in range(4)]
    assert np.mean(rates) < 0.3
    agent = DDPGAgent.for_spec(spec, random_state=0)
    assert evaluate(agent, spec, 20, seed=5) == evaluate(agent, spec, 20, seed=5)


def test_evaluate_success_episode():
    spec = EnvSpec(task="reach")
    agent = DDPGAgent.for_spec(spec, hidden_sizes=(), normalize_inputs=False)
    # a linear actor steering the gripper toward the goal: tanh(20 (goal - gripper))
    eye = np.eye(3)
    agent.actor_ = hand_net([9, 3], [20 * np.hstack([-eye, 0 * eye, eye])], [np.zeros(3)], "tanh")
    assert evaluate(agent, spec, 1) == 1.0
    with pytest.raises(ValueError):
        evaluate(agent, spec, 0)


def test_validation_lists_every_violation():
    cfg = tiny(epochs=0, gamma=1.5, weight_mode="max", seeds=())
    with pytest.raises(ConfigValidationError) as info:
        run_experiment(cfg)
    text = str(info.value)
    for key in ("epochs", "gamma", "weight_mode", "seeds"):
        assert key in text
    assert len(info.value.violations) == 4
    with pytest.raises(ConfigValidationError):
        RunConfig.from_dict({"epochz": 3})


def test_unwritable_output_is_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        run_experiment(tiny(out_dir=str(blocker), epochs=1))


def test_presets():
    names = [c.name for c in preset_configs("fig4")]
    assert names == [f"push-uniform-reuse{k}" for k in (1, 2, 3, 5)] + ["push-nsr-reuse1"]
    assert {c.env.task for c in preset_configs("fig3")} == {"reach", "push", "pick_and_place"}
    assert [c.weight_mode for c in preset_configs("fig5")] == ["nsr", "mean", "random"]
    assert all(c.group == "fig5" for c in preset_configs("fig5"))
    with pytest.raises(ConfigValidationError):
        preset_configs("fig9")
    cfg = dataclasses.replace(tiny(), env=EnvSpec(task="push"))
    assert preset_configs("fig3", cfg)[0].env.workspace_low != cfg.env.workspace_low
