"""Scenario orchestration: estimator bootstrap, offline training, online runs, CSV output."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import agent as ag
from .config import AgentConfig, ExperimentConfig
from .estimator import Estimator, TrainingSet, fit_offline
from .policies import (DrlBenchmark, LocalOnly, MecOnly, Oracle, Probabilistic, ProposedPolicy,
                       RandomFeasible)
from .sim import OUTCOME_COLUMNS, SimResult, Simulator

log = logging.getLogger(__name__)

AGGREGATE_COLUMNS = ("policy", "lambda", "beta_mean", "L", "seed", "avg_delay", "avg_energy", "avg_cost",
                     "mec_fraction")
AXES = {"lambda": ("tasks", "arrival_rate"), "beta": ("tasks", "beta_cycles"),
        "L": ("policy", "num_candidates")}


class ScenarioError(RuntimeError):
    """A run produced unusable results (e.g. non-finite metrics)."""


@dataclass
class Estimators:
    delay: Estimator
    energy: Estimator | None = None
    fits: dict = field(default_factory=dict)


@dataclass
class RunOutput:
    policy: str
    seed: int
    result: SimResult
    p: float | None = None


def _stream(seed, purpose):
    return np.random.default_rng(np.random.SeedSequence([seed, purpose]))


_BOOTSTRAP, _FIT, _POLICY = 1, 2, 3


def collect_samples(cfg: ExperimentConfig, seed=None):
    """Estimator training samples from a run with uniformly random feasible actions."""
    seed = cfg.seed if seed is None else seed
    ratios = tuple(cfg.objective.ratios) if cfg.objective.mode == "partial" else None
    n = cfg.estimator.num_samples
    params = cfg.sim_params(seed=(seed, _BOOTSTRAP))
    params.num_tasks = 50 * n
    sim = Simulator(params, RandomFeasible(_stream(seed, _BOOTSTRAP), ratios),
                    collect_samples=True, sample_target=n)
    return sim.run().samples[:n]


def train_estimators(cfg: ExperimentConfig, seed=None, samples=None) -> Estimators:
    seed = cfg.seed if seed is None else seed
    samples = samples if samples is not None else collect_samples(cfg, seed)
    e = cfg.estimator
    kw = dict(hidden=e.hidden, epochs=e.epochs, batch_size=e.batch_size, learning_rate=e.learning_rate)
    fits = {"delay": fit_offline(TrainingSet.from_samples(samples, "delay"), seed=[seed, _FIT, 0], **kw)}
    if cfg.objective.mode == "cost" and cfg.objective.w_energy > 0:
        fits["energy"] = fit_offline(TrainingSet.from_samples(samples, "energy"), seed=[seed, _FIT, 1], **kw)
    for name, fit in fits.items():
        log.info("%s estimator: val MSE %.4g, R2 %.3f", name, fit.val_mse, fit.val_r2)
    energy = fits["energy"].estimator if "energy" in fits else None
    return Estimators(fits["delay"].estimator, energy, fits)


_estimator_cache: dict = {}


def _estimator_key(cfg, seed):
    # the estimator depends on the environment only, not on the evaluated policy or agent
    reduced = cfg.with_updates(policy={"name": "oracle", "p": None, "p_grid": (0.0,)},
                               agent=AgentConfig().model_dump())
    return reduced.digest(), seed


def estimators_for(cfg, seed):
    key = _estimator_key(cfg, seed)
    if key not in _estimator_cache:
        _estimator_cache[key] = train_estimators(cfg, seed)
    return _estimator_cache[key]


def _dqn_kwargs(cfg):
    a = cfg.agent
    return dict(hidden=a.hidden, learning_rate=a.learning_rate, discount=a.discount,
                batch_size=a.batch_size, replay_capacity=min(a.replay_capacity, cfg.tasks.num_tasks),
                sync_period=a.sync_period)


def _schedule(cfg):
    a = cfg.agent
    return ag.EpsilonSchedule(a.epsilon_start, a.epsilon_end,
                              int(round(a.epsilon_decay_fraction * cfg.tasks.num_tasks)))


def make_policy(cfg: ExperimentConfig, name, seed, estimators=None, p=None):
    rng = _stream(seed, _POLICY)
    mode = cfg.objective.mode
    pc = cfg.policy
    if name == "local_only":
        return LocalOnly()
    if name == "mec_only":
        return MecOnly()
    if name == "probabilistic":
        return Probabilistic(p if p is not None else pc.p, rng)
    if name == "oracle":
        return Oracle(mode, tuple(cfg.objective.ratios))
    if name == "proposed":
        est = estimators or estimators_for(cfg, seed)
        return ProposedPolicy(
            est.delay, num_servers=cfg.network.num_servers, num_candidates=pc.num_candidates,
            action_history=pc.action_history, mode=mode, energy_estimator=est.energy,
            weights=cfg.sim_params().weights, ratios=tuple(cfg.objective.ratios), schedule=_schedule(cfg),
            rng=rng, reward_scale=cfg.agent.reward_scale, value_init=cfg.agent.value_init, **_dqn_kwargs(cfg))
    if name == "drl_benchmark":
        scales = {"capacity": cfg.capacity.range_cycles_per_s[1], "work": cfg.tasks.beta_cycles[1],
                  "data": cfg.tasks.alpha_bits[1], "rate": cfg.network.bandwidth_hz}
        return DrlBenchmark(num_servers=cfg.network.num_servers, num_candidates=pc.num_candidates, history_window=pc.history_window,
                            action_history=pc.action_history, scales=scales, schedule=_schedule(cfg), rng=rng,
                            reward_mode="cost" if mode == "cost" else "delay",
                            reward_scale=cfg.agent.reward_scale, value_init=cfg.agent.value_init, **_dqn_kwargs(cfg))
    raise ValueError(f"unknown policy {name!r}")


def run_policy(cfg: ExperimentConfig, name=None, seed=None, p=None, estimators=None) -> RunOutput:
    """One online run of a single policy."""
    name = name or cfg.policy.name
    seed = cfg.seed if seed is None else seed
    if name == "probabilistic" and p is None and cfg.policy.p is None:
        from .policies import sweep_p

        p, _ = sweep_p(cfg.with_updates(seed=seed), cfg.policy.p_grid)
    policy = make_policy(cfg, name, seed, estimators, p)
    result = Simulator(cfg.sim_params(seed=seed), policy).run()
    metrics = (result.avg_delay, result.avg_energy, result.avg_cost)
    if not all(math.isfinite(x) for x in metrics):
        raise ScenarioError(f"non-finite metrics for {name} seed {seed}: {metrics}")
    return RunOutput(name, seed, result, p if name == "probabilistic" else None)


def aggregate_row(cfg: ExperimentConfig, run: RunOutput):
    r = run.result
    return {"policy": run.policy, "lambda": cfg.tasks.arrival_rate,
            "beta_mean": 0.5 * (cfg.tasks.beta_cycles[0] + cfg.tasks.beta_cycles[1]),
            "L": cfg.policy.num_candidates, "seed": run.seed, "avg_delay": r.avg_delay,
            "avg_energy": r.avg_energy, "avg_cost": r.avg_cost, "mec_fraction": r.mec_fraction}


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(config_hash, columns, rows):
    buf = io.StringIO()
    buf.write(f"# config_hash={config_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def write_outcomes_csv(path, outcomes, config_hash):
    rows = ({c: getattr(o, c) for c in OUTCOME_COLUMNS} for o in outcomes)
    Path(path).write_text(_csv_text(config_hash, OUTCOME_COLUMNS, rows))


def write_aggregate_csv(path, rows, config_hash):
    Path(path).write_text(_csv_text(config_hash, AGGREGATE_COLUMNS, rows))


def run_scenario(cfg: ExperimentConfig, out_dir, seed=None):
    """Bootstrap + offline training (when needed) + online run; writes two CSVs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run = run_policy(cfg, seed=seed)
    row = aggregate_row(cfg, run)
    digest = cfg.digest()
    write_outcomes_csv(out_dir / "outcomes.csv", run.result.outcomes, digest)
    write_aggregate_csv(out_dir / "aggregate.csv", [row], digest)
    return row


def apply_axis(cfg: ExperimentConfig, axis, value):
    if axis not in AXES:
        raise ValueError(f"axis must be one of {sorted(AXES)}")
    section, key = AXES[axis]
    if axis == "beta":
        value = (float(value), float(value))
    elif axis == "L":
        value = int(value)
    return cfg.with_updates(**{section: {key: value}})


def sweep(cfg: ExperimentConfig, axis, values, policies, seeds, out_path=None):
    """One aggregate row per (axis value, policy, seed)."""
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one axis value")
    rows = []
    for value in values:
        cell = apply_axis(cfg, axis, value)
        for name in policies:
            for seed in seeds:
                run = run_policy(cell, name, seed=seed)
                rows.append(aggregate_row(cell, run))
                log.info("%s=%s %s seed=%s avg_delay=%.4f", axis, value, name, seed, rows[-1]["avg_delay"])
    if out_path is not None:
        write_aggregate_csv(out_path, rows, cfg.digest())
    return rows
