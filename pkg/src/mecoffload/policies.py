"""Decision policies sharing one interface: ``decide(request) -> OffloadDecision``."""
from __future__ import annotations

from collections import deque

import numpy as np

from . import agent as ag
from .cost import delay_cost, reward as reward_of, total_cost
from .sim import OffloadDecision

RATIO_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))
VALUE_INITS = ("zero", "mean_reward")


class Policy:
    name = "policy"

    def bind(self, sim):
        """Called once by the simulator; only privileged policies keep the handle."""

    def decide(self, request) -> OffloadDecision:
        raise NotImplementedError

    def observe(self, outcome):
        """Called when a task departs."""


class LocalOnly(Policy):
    name = "local_only"

    def decide(self, request):
        return OffloadDecision.local()


class MecOnly(Policy):
    """Nearest candidate with a free channel; local if none has one."""

    name = "mec_only"

    def decide(self, request):
        for c in request.candidates:
            if c.feasible:
                return OffloadDecision.offload(c.server, c.channel)
        return OffloadDecision.local()


class Probabilistic(Policy):
    """Each of the L candidates with probability p/L, local otherwise."""

    name = "probabilistic"

    def __init__(self, p, rng):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {p}")
        self.p = p
        self.rng = rng

    def decide(self, request):
        u = self.rng.random()
        if u >= self.p:
            return OffloadDecision.local()
        L = len(request.candidates)
        c = request.candidates[min(int(u * L / self.p), L - 1)]
        if not c.feasible:
            return OffloadDecision.local()
        return OffloadDecision.offload(c.server, c.channel)


class RandomFeasible(Policy):
    """Uniform over the feasible action set; used to bootstrap estimator data."""

    name = "random"

    def __init__(self, rng, ratios=None):
        self.rng = rng
        self.ratios = ratios

    def decide(self, request):
        feasible = [c for c in request.candidates if c.feasible]
        if self.ratios is None:
            k = self.rng.integers(len(feasible) + 1)
            if k == 0:
                return OffloadDecision.local()
            c = feasible[k - 1]
            return OffloadDecision.offload(c.server, c.channel)
        if not feasible:
            return OffloadDecision.local()
        k = self.rng.integers(len(feasible) * len(self.ratios))
        c = feasible[k // len(self.ratios)]
        return OffloadDecision.offload(c.server, c.channel, self.ratios[k % len(self.ratios)])


class Oracle(Policy):
    """Greedy per-task optimum using exact, privileged server state.

    ``mode`` is ``delay`` (minimize delay), ``cost`` (minimize weighted cost)
    or ``partial`` (minimize max of the local and edge halves over the ratio
    grid).
    """

    name = "oracle"

    def __init__(self, mode="delay", ratios=RATIO_GRID):
        self.mode = mode
        self.ratios = ratios
        self.sim = None

    def bind(self, sim):
        self.sim = sim

    def _score(self, delay, energy):
        if self.mode == "cost":
            p = self.sim.p
            return total_cost(p.weights, delay_cost(p.cost, delay), energy)
        return delay

    def evaluate(self, request):
        """(score, decision) for every candidate action, local first."""
        p = self.sim.p
        options = []
        if self.mode != "partial":
            options.append((self._score(request.beta / request.f_user,
                                        p.kappa * request.f_user ** 2 * request.beta),
                            OffloadDecision.local()))
        ratios = self.ratios if self.mode == "partial" else (1.0,)
        for c in request.candidates:
            if not c.feasible:
                continue
            for v in ratios:
                tr, tq, tc, e_edge = self.sim.exact_edge_outcome(request.task_id, c.server, c.channel, v)
                local = (1.0 - v) * request.beta / request.f_user
                e_local = p.kappa * request.f_user ** 2 * (1.0 - v) * request.beta
                options.append((self._score(max(local, tr + tq + tc), e_edge + e_local),
                                OffloadDecision.offload(c.server, c.channel, v)))
        return options

    def decide(self, request):
        options = self.evaluate(request)
        if not options:
            return OffloadDecision.local()
        return min(options, key=lambda o: o[0])[1]


class _DqnPolicy(Policy):
    """Bookkeeping shared by the two learning policies.

    A transition completes once both its reward (at departure) and the next
    task's state (at the next arrival) are known.
    """

    def __init__(self, dqn: ag.DoubleDQN, schedule: ag.EpsilonSchedule, rng, history, reward_mode,
                 reward_scale=1.0, value_init="mean_reward"):
        if value_init not in VALUE_INITS:
            raise ValueError(f"value_init must be one of {VALUE_INITS}")
        self.dqn = dqn
        self.schedule = schedule
        self.rng = rng
        self.history = deque([0] * history, maxlen=history) if history else deque(maxlen=0)
        self.reward_mode = reward_mode
        self.reward_scale = reward_scale
        self.steps = 0
        self._open = {}
        self._prev = None
        self.frozen = False
        # with "mean_reward", the first B completed transitions wait here
        self._warmup = [] if value_init == "mean_reward" else None

    def _history_features(self):
        return np.asarray(self.history, dtype=float) / max(self.dqn.n_out, 1)

    def _act(self, request, state, actions):
        if self._prev is not None and self._prev in self._open:
            self._open[self._prev][4] = (state, actions)
            self._maybe_learn(self._prev)
        q = self.dqn.q_values(state)
        eps = self.schedule(self.steps) if not self.frozen else 0.0
        a = ag.select_action(q, eps, actions, self.rng)
        self.steps += 1
        if not self.frozen:
            # state, Q at decision time, action, reward, next (state, actions)
            self._open[request.task_id] = [state, q.copy(), a, None, None]
            self._prev = request.task_id
        self.history.appendleft(self._history_code(a))
        return a

    def _history_code(self, a):
        return a

    def observe(self, outcome):
        entry = self._open.get(outcome.task_id)
        if entry is None:
            return
        entry[3] = reward_of(outcome, self.reward_mode) * self.reward_scale
        self._maybe_learn(outcome.task_id)

    def save_checkpoint(self, path):
        ag.save_checkpoint(path, self.dqn, steps=self.steps, history=self.history)

    def load_checkpoint(self, path):
        steps, history = ag.load_checkpoint(path, self.dqn)
        if len(history) != self.history.maxlen:
            raise ValueError(f"checkpoint history length {len(history)} != {self.history.maxlen}")
        self.steps = steps
        self.history.clear()
        self.history.extend(history)

    def _maybe_learn(self, task_id):
        state, q, a, r, nxt = self._open[task_id]
        if r is None or nxt is None:
            return
        del self._open[task_id]
        if self._warmup is not None:
            self._warmup.append((state, q, a, r, nxt))
            if len(self._warmup) < self.dqn.batch_size:
                return
            self._start_from_mean_reward()
            return
        self.dqn.learn(state, q, a, r, nxt[0], nxt[1])

    def _start_from_mean_reward(self):
        """Shift all Q outputs to the discounted value of the observed mean reward.

        A freshly initialized network predicts Q near zero, far above the
        true (negative) values, which makes every rarely tried action look
        best.  Starting from the value of the behaviour so far removes that
        optimism without favouring any action.
        """
        batch, self._warmup = self._warmup, None
        mean_r = float(np.mean([t[3] for t in batch]))
        delta = mean_r / (1.0 - self.dqn.discount) if self.dqn.discount < 1 else mean_r
        self.dqn.shift_values(delta)
        for entry in self._open.values():
            entry[1] = entry[1] + delta
        for state, q, a, r, nxt in batch:
            self.dqn.learn(state, q + delta, a, r, nxt[0], nxt[1])


class ProposedPolicy(_DqnPolicy):
    """Estimator-ranked state fed to a double DQN.

    ``mode`` selects the state builder: ``delay`` ranks by estimated delay,
    ``cost`` by weighted estimated delay and energy, ``partial`` ranks the
    server x ratio grid.
    """

    name = "proposed"

    def __init__(self, delay_estimator, *, num_servers, num_candidates, action_history=5, mode="delay",
                 energy_estimator=None, weights=None, ratios=RATIO_GRID, schedule=None, rng=None,
                 reward_scale=1.0, value_init="mean_reward", **dqn_kwargs):
        if mode not in ("delay", "cost", "partial"):
            raise ValueError(f"unknown mode {mode!r}")
        if mode == "cost" and weights is None:
            raise ValueError("cost mode needs weights")
        if mode == "cost" and weights.w_energy > 0 and energy_estimator is None:
            raise ValueError("energy weight > 0 needs an energy estimator")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.mode = mode
        self.M = num_servers
        self.L = num_candidates
        self.ratios = tuple(ratios) if mode == "partial" else None
        self.delay_estimator = delay_estimator
        self.energy_estimator = energy_estimator
        self.weights = weights
        n_out = num_servers * len(self.ratios) if self.ratios else num_servers + 1
        n_in = (n_out if self.ratios else num_servers) + action_history
        dqn = ag.DoubleDQN(n_in, n_out, rng=rng, **dqn_kwargs)
        super().__init__(dqn, schedule or ag.EpsilonSchedule(), rng, action_history,
                         {"delay": "delay", "cost": "cost", "partial": "partial"}[mode], reward_scale, value_init)

    def _history_code(self, a):
        return a + 1 if self.ratios else a

    def state(self, request):
        if self.mode == "delay":
            omega, servers = ag.build_state(request, self.delay_estimator, self.M, self.L)
            actions = [0] + [m + 1 for m in servers]
        elif self.mode == "cost":
            omega, servers = ag.build_state_general(request, self.delay_estimator, self.energy_estimator,
                                                    self.weights, self.M, self.L)
            actions = [0] + [m + 1 for m in servers]
        else:
            omega, actions = ag.build_state_partial(request, self.delay_estimator, self.ratios, self.M, self.L)
        return np.concatenate([omega, self._history_features()]), actions

    def decide(self, request):
        state, actions = self.state(request)
        if not actions:
            # partial mode with every candidate channel busy
            return OffloadDecision.local()
        a = self._act(request, state, actions)
        channels = {c.server: c.channel for c in request.candidates}
        return ag.action_to_strategy(a, channels, self.ratios)


class DrlBenchmark(_DqnPolicy):
    """Double DQN on the raw per-candidate observations, no estimator or ranking.

    Same action space as the proposed agent (0 local, m+1 server m); the
    state lists the L candidates in distance order.
    """

    name = "drl_benchmark"

    def __init__(self, *, num_servers, num_candidates, history_window, action_history=5, scales,
                 schedule=None, rng=None, reward_mode="delay", reward_scale=1.0, value_init="mean_reward",
                 **dqn_kwargs):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.M = num_servers
        self.L = num_candidates
        self.U = history_window
        self.scales = scales
        n_in = num_candidates * (history_window + 2) + 2 + action_history
        dqn = ag.DoubleDQN(n_in, num_servers + 1, rng=rng, **dqn_kwargs)
        super().__init__(dqn, schedule or ag.EpsilonSchedule(), rng, action_history, reward_mode, reward_scale,
                         value_init)

    def state(self, request):
        s = self.scales
        parts = []
        for c in request.candidates:
            parts.extend(np.asarray(c.f_history) / s["capacity"])
            parts.append(c.backlog / s["work"])
            parts.append(c.rate / s["rate"])
        parts += [request.alpha / s["data"], request.beta / s["work"]]
        actions = [0] + [c.server + 1 for c in request.candidates if c.feasible]
        return np.concatenate([np.asarray(parts, dtype=float), self._history_features()]), actions

    def decide(self, request):
        state, actions = self.state(request)
        a = self._act(request, state, actions)
        channels = {c.server: c.channel for c in request.candidates}
        return ag.action_to_strategy(a, channels)


def sweep_p(config, grid, seeds=None):
    """Run probabilistic offloading per grid point; return (best p, its mean cost)."""
    from .experiment import run_policy

    grid = list(grid)
    if not grid:
        raise ValueError("empty p grid")
    seeds = list(seeds) if seeds is not None else [config.seed]
    best = None
    for p in grid:
        cost = float(np.mean([run_policy(config, "probabilistic", seed=s, p=p).result.avg_cost for s in seeds]))
        if best is None or cost < best[1]:
            best = (p, cost)
    return best
