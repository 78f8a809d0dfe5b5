"""Event-driven simulation of task arrivals, uploads, FIFO queues and departures."""
from __future__ import annotations

import copy
import heapq
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import capacity, radio
from .cost import CostWeights, DelayCostSpec, delay_cost, reward as reward_of, total_cost


class SimulationIntegrityError(RuntimeError):
    """An internal invariant broke (e.g. a decision used a busy channel)."""


@dataclass
class SimParams:
    area: tuple = (-5.0, 5.0)
    num_servers: int = 15
    bandwidth: float = 20e6
    num_channels: int = 10
    path_loss_exponent: float = 3.8
    noise_density: float = radio.dbm_to_watts(-174.0)
    tx_power: float = radio.dbm_to_watts(23.0)
    min_distance: float = radio.DEFAULT_MIN_DISTANCE_KM
    arrival_rate: float = 15.0
    num_tasks: int = 20000
    alpha_range: tuple = (8e6, 12e6)
    beta_range: tuple = (7e9, 8e9)
    user_capability: float = 1e9
    capacity_range: tuple = (5e9, 12e9)
    segment_model: str = "exponential"
    segment_mean: float = 1.0
    segment_bounds: tuple = (0.5, 1.5)
    kappa: float = 1e-27
    num_candidates: int = 3
    history_window: int = 10
    action_history: int = 5
    cost: DelayCostSpec = field(default_factory=DelayCostSpec)
    weights: CostWeights = field(default_factory=CostWeights)
    reward_mode: str = "delay"
    seed: int = 0


@dataclass
class TaskSpec:
    id: int
    t_arr: float
    alpha: float
    beta: float
    position: np.ndarray
    f_user: float
    power: float


@dataclass(frozen=True)
class CandidateInfo:
    """What server ``server`` reports to the decision maker."""

    server: int
    f_history: tuple
    backlog: float
    rate: float
    channel: int | None

    @property
    def feasible(self):
        return self.channel is not None


@dataclass(frozen=True)
class DecisionRequest:
    task_id: int
    t_arr: float
    position: tuple
    alpha: float
    beta: float
    f_user: float
    candidates: tuple
    recent_actions: tuple


@dataclass(frozen=True)
class OffloadDecision:
    """Server index (0-based) and channel, or local when ``server`` is None.

    ``ratio`` is the offloaded fraction: 1 for full offloading, 0 for local.
    """

    server: int | None = None
    channel: int | None = None
    ratio: float = 0.0

    @classmethod
    def local(cls):
        return cls(None, None, 0.0)

    @classmethod
    def offload(cls, server, channel, ratio=1.0):
        if channel is None:
            raise SimulationIntegrityError(f"server {server} has no free channel")
        return cls(int(server), int(channel), float(ratio))

    @property
    def action(self):
        return 0 if self.server is None else self.server + 1

    def strategy_matrix(self, num_servers, num_channels):
        s = np.zeros((num_servers, num_channels), dtype=int)
        if self.server is not None:
            s[self.server, self.channel] = 1
        return s


@dataclass
class TaskOutcome:
    task_id: int
    t_arr: float
    action: int
    v_ratio: float
    server_id: int | None
    channel: int | None
    tau_trans: float = 0.0
    tau_queue: float = 0.0
    tau_comp: float = 0.0
    tau_local: float = 0.0
    tau_edge: float = 0.0
    delay: float = 0.0
    energy: float = 0.0
    cost: float = 0.0
    reward: float = 0.0
    t_queue: float = math.nan
    t_comp: float = math.nan
    t_dep: float = math.nan
    edge_work: float = 0.0


@dataclass
class EstimatorSample:
    features: np.ndarray
    delay: float
    energy: float


OUTCOME_COLUMNS = ("task_id", "t_arr", "action", "v_ratio", "server_id", "channel", "tau_trans",
                   "tau_queue", "tau_comp", "delay", "energy", "cost", "reward")


def arrival_process(rate, area, rng, alpha_range, beta_range, f_user, power):
    """Endless Poisson stream of tasks with uniform positions and sizes."""
    if not rate > 0:
        raise ValueError("arrival rate must be positive")
    lo, hi = area
    t = 0.0
    k = 0
    while True:
        t += rng.exponential(1.0 / rate)
        pos = rng.uniform(lo, hi, size=2)
        alpha = rng.uniform(*alpha_range) if alpha_range[0] < alpha_range[1] else float(alpha_range[0])
        beta = rng.uniform(*beta_range) if beta_range[0] < beta_range[1] else float(beta_range[0])
        yield TaskSpec(k, t, float(alpha), float(beta), pos, float(f_user), float(power))
        k += 1


def features(f_history, backlog, alpha, beta, rate):
    """Estimator input: capacity history, backlog, data size, work, uplink rate."""
    return np.array([*f_history, backlog, alpha, beta, rate], dtype=float)


class Server:
    def __init__(self, idx, position, trace, num_channels):
        self.idx = idx
        self.position = position
        self.trace = trace
        self.busy = np.zeros(num_channels, dtype=bool)
        self.queue = deque()  # (task_id, work, t_queue)
        self.active = None  # (task_id, work, t_comp, t_dep)
        self.uploading = {}  # task_id -> (t_queue, work, seq)

    def backlog(self, t):
        """Queued work plus the unfinished part of the task in service."""
        q = sum(item[1] for item in self.queue)
        if self.active is not None:
            _, work, t_comp, _ = self.active
            q += max(work - capacity.cycles_between(self.trace, t_comp, t), 0.0)
        return q

    def projected_start(self, t_now, t_queue):
        """When a job reaching the queue at ``t_queue`` would start service.

        Replays the FIFO order for work already committed to this server and
        assumes no later arrival overtakes it.
        """
        free = self.active[3] if self.active is not None else t_now
        for _, work, tq in self.queue:
            start = max(free, tq)
            free = start + capacity.time_to_complete(self.trace, start, work)
        for tq, work, _ in sorted(self.uploading.values(), key=lambda x: (x[0], x[2])):
            if tq > t_queue:
                break
            start = max(free, tq)
            free = start + capacity.time_to_complete(self.trace, start, work)
        return max(free, t_queue)


_ARRIVAL, _UPLOAD, _COMP, _LOCAL = 0, 1, 2, 3


@dataclass
class SimResult:
    outcomes: list
    samples: list
    servers: list

    @property
    def avg_delay(self):
        return float(np.mean([o.delay for o in self.outcomes]))

    @property
    def avg_energy(self):
        return float(np.mean([o.energy for o in self.outcomes]))

    @property
    def avg_cost(self):
        return float(np.mean([o.cost for o in self.outcomes]))

    @property
    def mec_fraction(self):
        return float(np.mean([o.server_id is not None for o in self.outcomes]))


class Simulator:
    """One replication: K Poisson tasks, a policy, then drain."""

    def __init__(self, params: SimParams, policy, *, collect_samples=False, sample_target=None):
        self.p = params
        self.policy = policy
        self.collect_samples = collect_samples
        self.sample_target = sample_target
        ss = np.random.SeedSequence(params.seed)
        s_pos, s_traces, s_arr, s_fade = ss.spawn(4)
        pos_rng = np.random.default_rng(s_pos)
        lo, hi = params.area
        positions = pos_rng.uniform(lo, hi, size=(params.num_servers, 2))
        self.servers = []
        for m, s in enumerate(s_traces.spawn(params.num_servers)):
            trace = capacity.generate_trace(
                params.capacity_range, np.random.default_rng(s), model=params.segment_model,
                mean=params.segment_mean, low=params.segment_bounds[0], high=params.segment_bounds[1])
            self.servers.append(Server(m, positions[m], trace, params.num_channels))
        self.positions = positions
        self.fading_rng = np.random.default_rng(s_fade)
        self.arrivals = arrival_process(params.arrival_rate, params.area, np.random.default_rng(s_arr),
                                        params.alpha_range, params.beta_range, params.user_capability,
                                        params.tx_power)
        self.now = 0.0
        self._heap = []
        self._seq = 0
        self.tasks = {}
        self.outcomes = {}
        self.samples = []
        self._pending = {}  # task_id -> halves still running
        self._features = {}
        self.recent = deque([0] * params.action_history, maxlen=max(params.action_history, 1))
        self.arrived = 0
        self.offloaded = 0
        self.accept_arrivals = True
        policy.bind(self)

    # event plumbing -------------------------------------------------------

    def _push(self, t, kind, payload):
        heapq.heappush(self._heap, (t, self._seq, kind, payload))
        self._seq += 1

    def _schedule_next_arrival(self):
        if self.arrived >= self.p.num_tasks:
            return
        if self.sample_target is not None and self.offloaded >= self.sample_target:
            return
        task = next(self.arrivals)
        self.arrived += 1
        self._push(task.t_arr, _ARRIVAL, task)

    def run(self) -> SimResult:
        self._schedule_next_arrival()
        self.drain()
        if len(self.outcomes) != self.arrived:
            raise SimulationIntegrityError("some tasks never departed")
        return SimResult([self.outcomes[k] for k in sorted(self.outcomes)], self.samples, self.servers)

    def drain(self, include_arrivals=True, until_departed=None):
        while self._heap:
            t, _, kind, payload = heapq.heappop(self._heap)
            if kind == _ARRIVAL and not (include_arrivals and self.accept_arrivals):
                continue
            self.now = t
            if kind == _ARRIVAL:
                self._on_arrival(payload)
            elif kind == _UPLOAD:
                self._on_upload_done(payload)
            elif kind == _COMP:
                self._on_comp_done(payload)
            else:
                self._finish_part(payload)
            if until_departed is not None and until_departed in self.outcomes:
                return

    # decision path --------------------------------------------------------

    def build_request(self, task, rates):
        cands = []
        for m in radio.nearest_servers(task.position, self.positions, self.p.num_candidates,
                                       self.p.min_distance):
            srv = self.servers[m]
            n = radio.best_free_channel(srv.busy, rates[m])
            cands.append(CandidateInfo(
                server=m,
                f_history=tuple(srv.trace.history(task.t_arr, self.p.history_window)),
                backlog=srv.backlog(task.t_arr),
                rate=float(rates[m, n]) if n is not None else 0.0,
                channel=n,
            ))
        return DecisionRequest(task.id, task.t_arr, tuple(task.position), task.alpha, task.beta,
                               task.f_user, tuple(cands), tuple(self.recent))

    def task_rates(self, task):
        return radio.rate_matrix(task.position, self.positions, self.fading_rng,
                                 gamma=self.p.path_loss_exponent, power=task.power,
                                 bandwidth=self.p.bandwidth, n_channels=self.p.num_channels,
                                 noise_density=self.p.noise_density, d_min=self.p.min_distance)

    def _on_arrival(self, task):
        self._schedule_next_arrival()
        rates = self.task_rates(task)
        request = self.build_request(task, rates)
        self.tasks[task.id] = (task, rates, request)
        decision = self.policy.decide(request)
        self.apply_decision(task, decision)

    def apply_decision(self, task, decision: OffloadDecision):
        t = task.t_arr
        _, rates, request = self.tasks[task.id]
        v = decision.ratio if decision.server is not None else 0.0
        if decision.server is not None and not 0.0 < v <= 1.0:
            raise SimulationIntegrityError(f"offload ratio must be in (0, 1], got {v}")
        out = TaskOutcome(task.id, t, decision.action, v,
                          None if decision.server is None else decision.server + 1, decision.channel)
        self._pending[task.id] = [out, 0]
        local_work = (1.0 - v) * task.beta
        if local_work > 0:
            out.tau_local = local_work / task.f_user
            out.energy += capacity.local_energy(task.f_user, local_work, self.p.kappa)
            self._pending[task.id][1] += 1
            self._push(t + out.tau_local, _LOCAL, task.id)
        if decision.server is not None:
            srv = self.servers[decision.server]
            n = decision.channel
            if n is None or srv.busy[n]:
                raise SimulationIntegrityError(
                    f"task {task.id}: channel {n} of server {decision.server} is not free")
            r = float(rates[decision.server, n])
            out.tau_trans = v * task.alpha / r
            out.t_queue = t + out.tau_trans
            out.edge_work = v * task.beta
            srv.busy[n] = True
            srv.uploading[task.id] = (out.t_queue, out.edge_work, self._seq)
            self._pending[task.id][1] += 1
            self._push(out.t_queue, _UPLOAD, task.id)
            self.offloaded += 1
            if self.collect_samples:
                info = next(c for c in request.candidates if c.server == decision.server)
                self._features[task.id] = features(info.f_history, info.backlog, v * task.alpha,
                                                   v * task.beta, r)
        self.recent.appendleft(decision.action)
        if self._pending[task.id][1] == 0:
            # zero-work local task
            self._finish_part(task.id)

    # service path ---------------------------------------------------------

    def _on_upload_done(self, task_id):
        out = self._pending[task_id][0]
        srv = self.servers[out.server_id - 1]
        srv.busy[out.channel] = False
        del srv.uploading[task_id]
        srv.queue.append((task_id, out.edge_work, out.t_queue))
        if srv.active is None:
            self._start_next(srv)

    def _start_next(self, srv):
        task_id, work, _ = srv.queue.popleft()
        out = self._pending[task_id][0]
        out.t_comp = self.now
        out.tau_queue = out.t_comp - out.t_queue
        out.tau_comp = capacity.time_to_complete(srv.trace, self.now, work)
        out.t_dep = out.t_comp + out.tau_comp
        srv.active = (task_id, work, out.t_comp, out.t_dep)
        self._push(out.t_dep, _COMP, srv.idx)

    def _on_comp_done(self, m):
        srv = self.servers[m]
        task_id, work, t_comp, _ = srv.active
        srv.active = None
        out = self._pending[task_id][0]
        out.tau_edge = out.tau_trans + out.tau_queue + out.tau_comp
        e_edge = capacity.computation_energy(srv.trace, t_comp, work, self.p.kappa)
        out.energy += e_edge
        if self.collect_samples:
            self.samples.append(EstimatorSample(self._features.pop(task_id), out.tau_edge, e_edge))
        if srv.queue:
            self._start_next(srv)
        self._finish_part(task_id)

    def _finish_part(self, task_id):
        entry = self._pending[task_id]
        entry[1] -= 1
        if entry[1] > 0:
            return
        out = entry[0]
        del self._pending[task_id]
        out.delay = max(out.tau_local, out.tau_edge)
        c_d = delay_cost(self.p.cost, out.delay)
        out.cost = total_cost(self.p.weights, c_d, out.energy)
        out.reward = reward_of(out, self.p.reward_mode)
        self.outcomes[task_id] = out
        del self.tasks[task_id]
        self.policy.observe(out)

    # privileged access ----------------------------------------------------

    def exact_edge_outcome(self, task_id, server, channel, ratio=1.0):
        """Exact (tau_trans, tau_queue, tau_comp, energy) if ``task_id`` went to ``server`` now.

        Reads true server state; only the oracle may call this.
        """
        task, rates, _ = self.tasks[task_id]
        srv = self.servers[server]
        tau_trans = ratio * task.alpha / float(rates[server, channel])
        t_queue = task.t_arr + tau_trans
        t_comp = srv.projected_start(self.now, t_queue)
        work = ratio * task.beta
        tau_comp = capacity.time_to_complete(srv.trace, t_comp, work)
        energy = capacity.computation_energy(srv.trace, t_comp, work, self.p.kappa)
        return tau_trans, t_comp - t_queue, tau_comp, energy

    def clone(self, policy=None):
        """Private copy of the system state for what-if continuations.

        The copy gets no further arrivals and reports departures to
        ``policy`` (default: a policy that ignores them).
        """
        memo = {id(self.arrivals): None, id(self.policy): policy if policy is not None else _Ignore()}
        twin = copy.deepcopy(self, memo)
        twin.accept_arrivals = False
        return twin


class _Ignore:
    def decide(self, request):
        raise SimulationIntegrityError("a cloned simulator takes no new arrivals")

    def observe(self, outcome):
        pass
