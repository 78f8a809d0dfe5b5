"""Experiment configuration schema.  Defaults follow the simulation parameter table."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .cost import FAMILIES, CostWeights, DelayCostSpec
from .radio import dbm_to_watts
from .sim import SimParams

POLICIES = ("proposed", "drl_benchmark", "probabilistic", "mec_only", "local_only", "oracle")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _ordered(v):
    if v[0] > v[1]:
        raise ValueError(f"range lower bound exceeds upper bound: {v}")
    return v


class NetworkConfig(_Section):
    area_km: Tuple[float, float] = (-5.0, 5.0)
    num_servers: int = Field(15, ge=1)
    bandwidth_hz: float = Field(20e6, gt=0)
    num_channels: int = Field(10, ge=1)
    tx_power_dbm: float = 23.0
    path_loss_exponent: float = Field(3.8, ge=2)
    noise_dbm_per_hz: float = -174.0
    min_distance_km: float = Field(0.01, gt=0)

    _area = field_validator("area_km")(_ordered)


class TaskConfig(_Section):
    arrival_rate: float = Field(15.0, gt=0)
    num_tasks: int = Field(20000, ge=1)
    alpha_bits: Tuple[float, float] = (8e6, 12e6)
    beta_cycles: Tuple[float, float] = (7e9, 8e9)
    user_capability: float = Field(1e9, gt=0)

    _ranges = field_validator("alpha_bits", "beta_cycles")(_ordered)


class CapacityConfig(_Section):
    range_cycles_per_s: Tuple[float, float] = (5e9, 12e9)
    segment_model: Literal["exponential", "uniform"] = "exponential"
    segment_mean_s: float = Field(1.0, gt=0)
    segment_bounds_s: Tuple[float, float] = (0.5, 1.5)
    kappa: float = Field(1e-27, ge=0)

    _ranges = field_validator("range_cycles_per_s", "segment_bounds_s")(_ordered)

    @field_validator("range_cycles_per_s")
    @classmethod
    def _positive(cls, v):
        if v[0] <= 0:
            raise ValueError("capacities must be positive")
        return v


class CostConfig(_Section):
    family: str = "linear"
    tau_th: float = 1.0
    c1: float = 1.0
    c2: float = 2.0
    c3: float = 0.5
    c4: float = 1.0
    c_max: float = 100.0

    @model_validator(mode="after")
    def _valid(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        self.spec()
        return self

    def spec(self):
        return DelayCostSpec(**self.model_dump())


class ObjectiveConfig(_Section):
    mode: Literal["delay", "cost", "partial"] = "delay"
    cost: CostConfig = CostConfig()
    w_delay: float = Field(1.0, ge=0)
    w_energy: float = Field(0.0, ge=0)
    ratios: Tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(1, 10))

    @model_validator(mode="after")
    def _valid(self):
        CostWeights(self.w_delay, self.w_energy)
        if not self.ratios or any(not 0 < v <= 1 for v in self.ratios):
            raise ValueError("ratios must be non-empty and within (0, 1]")
        return self


class PolicyConfig(_Section):
    name: Literal[POLICIES]
    num_candidates: int = Field(3, ge=1)
    history_window: int = Field(10, ge=1)
    action_history: int = Field(5, ge=0)
    p: Optional[float] = Field(None, ge=0, le=1)
    p_grid: Tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(11))


class AgentConfig(_Section):
    hidden: Tuple[int, ...] = (512, 512)
    learning_rate: float = Field(1e-3, gt=0)
    discount: float = Field(0.95, ge=0, le=1)
    batch_size: int = Field(32, ge=1)
    replay_capacity: int = Field(100_000, ge=1)
    sync_period: int = Field(1, ge=1)
    epsilon_start: float = Field(1.0, ge=0, le=1)
    epsilon_end: float = Field(0.01, ge=0, le=1)
    epsilon_decay_fraction: float = Field(0.25, ge=0, le=1)
    reward_scale: float = Field(30.0, gt=0)
    value_init: Literal["zero", "mean_reward"] = "mean_reward"


class EstimatorConfig(_Section):
    hidden: Tuple[int, ...] = (64, 128, 128)
    epochs: int = Field(100, ge=1)
    batch_size: int = Field(64, ge=1)
    learning_rate: float = Field(3e-3, gt=0)
    num_samples: int = Field(10_000, ge=100)


class ExperimentConfig(_Section):
    seed: int
    policy: PolicyConfig
    network: NetworkConfig = NetworkConfig()
    tasks: TaskConfig = TaskConfig()
    capacity: CapacityConfig = CapacityConfig()
    objective: ObjectiveConfig = ObjectiveConfig()
    agent: AgentConfig = AgentConfig()
    estimator: EstimatorConfig = EstimatorConfig()

    @model_validator(mode="after")
    def _cross(self):
        if self.policy.num_candidates > self.network.num_servers:
            raise ValueError("policy.num_candidates exceeds network.num_servers")
        return self

    @classmethod
    def load(cls, path):
        data = yaml.safe_load(Path(path).read_text()) or {}
        return cls.model_validate(data)

    def dump(self, path):
        Path(path).write_text(yaml.safe_dump(self.model_dump(mode="json"), sort_keys=False))

    def with_updates(self, **sections):
        """Copy with nested overrides, e.g. ``tasks={"arrival_rate": 5}``."""
        data = self.model_dump()
        for key, val in sections.items():
            if isinstance(val, dict):
                data[key].update(val)
            else:
                data[key] = val
        return type(self).model_validate(data)

    def digest(self):
        blob = json.dumps(self.model_dump(mode="json"), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def sim_params(self, seed=None, reward_mode=None) -> SimParams:
        n, t, c, o, p = self.network, self.tasks, self.capacity, self.objective, self.policy
        return SimParams(
            area=tuple(n.area_km), num_servers=n.num_servers, bandwidth=n.bandwidth_hz,
            num_channels=n.num_channels, path_loss_exponent=n.path_loss_exponent,
            noise_density=dbm_to_watts(n.noise_dbm_per_hz), tx_power=dbm_to_watts(n.tx_power_dbm),
            min_distance=n.min_distance_km, arrival_rate=t.arrival_rate, num_tasks=t.num_tasks,
            alpha_range=tuple(t.alpha_bits), beta_range=tuple(t.beta_cycles),
            user_capability=t.user_capability, capacity_range=tuple(c.range_cycles_per_s),
            segment_model=c.segment_model, segment_mean=c.segment_mean_s,
            segment_bounds=tuple(c.segment_bounds_s), kappa=c.kappa, num_candidates=p.num_candidates,
            history_window=p.history_window, action_history=p.action_history, cost=o.cost.spec(),
            weights=CostWeights(o.w_delay, o.w_energy), reward_mode=reward_mode or o.mode,
            seed=self.seed if seed is None else seed,
        )
