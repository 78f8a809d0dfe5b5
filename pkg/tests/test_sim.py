import numpy as np
import pytest

from mecoffload import capacity
from mecoffload.capacity import CapacityTrace
from mecoffload.policies import LocalOnly, MecOnly, Policy, RandomFeasible
from mecoffload.sim import (OffloadDecision, SimParams, SimulationIntegrityError, Simulator, TaskSpec,
                            arrival_process)

from .invariants import violations


class Scripted(Policy):
    """Offloads to server 0 on its best free channel, or goes local."""

    def __init__(self, edge=True, ratio=1.0):
        self.edge = edge
        self.ratio = ratio

    def decide(self, request):
        c = next(c for c in request.candidates if c.server == 0)
        if not self.edge:
            return OffloadDecision.local()
        return OffloadDecision.offload(0, c.channel, self.ratio)


def controlled_sim(tasks, traces, policy, rate=1e7, num_channels=2, **kw):
    """Simulator with hand-picked tasks, capacity traces and a flat rate matrix."""
    params = SimParams(num_servers=len(traces), num_channels=num_channels, num_tasks=len(tasks),
                       num_candidates=len(traces), **kw)
    sim = Simulator(params, policy, collect_samples=True)
    sim.arrivals = iter(tasks)
    for srv, tr in zip(sim.servers, traces):
        srv.trace = tr
    sim.task_rates = lambda task: np.full((len(traces), num_channels), rate)
    return sim


def task(k, t, alpha, beta, f_user=1e9):
    return TaskSpec(k, t, alpha, beta, np.zeros(2), f_user, 0.2)


class TestClosedForms:
    def test_single_task_empty_system(self):
        sim = controlled_sim([task(0, 0.3, 1e7, 4e9)], [CapacityTrace.constant(2e9)], Scripted())
        o = sim.run().outcomes[0]
        assert o.tau_trans == 1.0 and o.tau_queue == 0.0 and o.tau_comp == 2.0
        assert o.delay == pytest.approx(3.0, rel=1e-15)

    def test_transmission_example(self):
        sim = controlled_sim([task(0, 0.0, 1e7, 1e9)], [CapacityTrace.constant(1e9)], Scripted(), rate=4e6)
        assert sim.run().outcomes[0].tau_trans == 2.5

    def test_two_tasks_back_to_back(self):
        # task 0 computes on [1, 3]; at task 1's t_queue = 1.5 the server still owes 3e9 cycles
        tasks = [task(0, 0.0, 1e7, 4e9), task(1, 0.5, 1e7, 2e9)]
        res = controlled_sim(tasks, [CapacityTrace.constant(2e9)], Scripted()).run()
        first, second = res.outcomes
        assert first.t_dep == 3.0
        remaining = 4e9 - capacity.cycles_between(res.servers[0].trace, first.t_comp, second.t_queue)
        assert second.tau_queue == pytest.approx(remaining / 2e9, rel=1e-12)
        assert second.tau_queue == pytest.approx(1.5, rel=1e-12)
        assert second.delay == pytest.approx(3.5, rel=1e-12)
        assert second.channel != first.channel

    def test_piecewise_queue_wait(self):
        # an earlier job with 3 cycles of work sits ahead on the {0:2, 1:1} trace
        tr = CapacityTrace([0.0, 1.0], [2.0, 1.0])
        tasks = [task(0, 0.0, 0.0, 3.0), task(1, 0.0, 0.0, 1.0)]
        res = controlled_sim(tasks, [tr], Scripted()).run()
        assert res.outcomes[1].tau_queue == pytest.approx(2.0, rel=1e-12)

    def test_local_only(self):
        p = SimParams(num_tasks=200, seed=3)
        res = Simulator(p, LocalOnly()).run()
        for o in res.outcomes:
            beta = o.tau_local * p.user_capability
            assert o.delay == o.tau_local and o.server_id is None and o.tau_trans == 0.0
            assert o.energy == pytest.approx(p.kappa * p.user_capability ** 2 * beta, rel=1e-12)

    def test_constant_capacity_closed_forms(self):
        f = 6e9
        tasks = [task(k, 0.05 * k, 1e7, 7.5e9) for k in range(6)]
        res = controlled_sim(tasks, [CapacityTrace.constant(f)], Scripted(), num_channels=6).run()
        srv_free = None
        for o in res.outcomes:
            assert o.tau_comp == pytest.approx(7.5e9 / f, rel=1e-15)
            assert o.energy == pytest.approx(1e-27 * f * f * 7.5e9, rel=1e-15)
            if srv_free is not None:
                backlog = max(srv_free - o.t_queue, 0.0) * f
                assert o.tau_queue == pytest.approx(backlog / f, rel=1e-12, abs=1e-12)
            srv_free = o.t_dep


class TestPartial:
    def test_halves_run_in_parallel(self):
        sim = controlled_sim([task(0, 0.0, 1e7, 4e9)], [CapacityTrace.constant(2e9)], Scripted(ratio=0.25))
        o = sim.run().outcomes[0]
        assert o.tau_local == pytest.approx(3.0)
        assert o.tau_trans == pytest.approx(0.25) and o.tau_comp == pytest.approx(0.5)
        assert o.delay == pytest.approx(3.0)
        assert o.edge_work == 1e9

    def test_sample_carries_scaled_sizes(self):
        sim = controlled_sim([task(0, 0.0, 1e7, 4e9)], [CapacityTrace.constant(2e9)], Scripted(ratio=0.5))
        res = sim.run()
        (s,) = res.samples
        assert s.features[-3] == 5e6 and s.features[-2] == 2e9
        assert s.delay == res.outcomes[0].tau_edge


class TestSamples:
    def test_constant_trace_history_window(self):
        sim = controlled_sim([task(0, 2.0, 1e7, 1e9)], [CapacityTrace.constant(3e9)], Scripted())
        (s,) = sim.run().samples
        assert list(s.features[:10]) == [3e9] * 10

    def test_targets_match_outcome(self):
        p = SimParams(num_tasks=300, seed=1)
        res = Simulator(p, RandomFeasible(np.random.default_rng(0)), collect_samples=True).run()
        edge = [o for o in res.outcomes if o.server_id is not None]
        assert len(res.samples) == len(edge)
        assert sorted(s.delay for s in res.samples) == sorted(o.delay for o in edge)


class TestBacklog:
    def test_empty(self):
        sim = controlled_sim([], [CapacityTrace.constant(1e9)], Scripted())
        assert sim.servers[0].backlog(5.0) == 0.0

    def test_in_service_piecewise(self):
        tr = CapacityTrace([0.0, 1.0], [2.0, 1.0])
        sim = controlled_sim([], [tr], Scripted())
        srv = sim.servers[0]
        srv.active = (0, 5.0, 0.5, None)
        # 1 cycle done by t=1 and 0.5 more by t=1.5
        assert srv.backlog(1.5) == pytest.approx(5.0 - 1.5)
        srv.queue.append((1, 2.0, 0.7))
        assert srv.backlog(1.5) == pytest.approx(5.5)


class TestArrivals:
    def test_mean_interarrival_and_spread(self):
        gen = arrival_process(10.0, (-5, 5), np.random.default_rng(0), (8e6, 12e6), (7e9, 8e9), 1e9, 0.2)
        tasks = [next(gen) for _ in range(100_000)]
        t = np.array([x.t_arr for x in tasks])
        assert np.mean(np.diff(t, prepend=0.0)) == pytest.approx(0.1, rel=0.02)
        pos = np.array([x.position for x in tasks])
        quadrants = {(bool(x > 0), bool(y > 0)) for x, y in pos[:1000]}
        assert len(quadrants) == 4
        assert all(8e6 <= x.alpha <= 12e6 and 7e9 <= x.beta <= 8e9 for x in tasks)

    def test_same_seed_same_stream(self):
        def first(seed):
            g = arrival_process(5.0, (-5, 5), np.random.default_rng(seed), (1, 2), (3, 4), 1.0, 1.0)
            return [next(g).t_arr for _ in range(50)]
        assert first(4) == first(4)

    def test_rate_positive(self):
        with pytest.raises(ValueError):
            next(arrival_process(0.0, (-5, 5), np.random.default_rng(0), (1, 2), (3, 4), 1.0, 1.0))


class TestIntegrity:
    def test_busy_channel_rejected(self):
        class SameChannel(Policy):
            def decide(self, request):
                return OffloadDecision.offload(0, 0)
        tasks = [task(0, 0.0, 1e7, 1e9), task(1, 0.1, 1e7, 1e9)]
        with pytest.raises(SimulationIntegrityError):
            controlled_sim(tasks, [CapacityTrace.constant(1e9)], SameChannel()).run()

    def test_offload_without_channel(self):
        with pytest.raises(SimulationIntegrityError):
            OffloadDecision.offload(0, None)


@pytest.mark.parametrize("policy", ["random", "mec_only"])
def test_invariants_hold(policy):
    for seed in range(3):
        p = SimParams(num_tasks=2000, arrival_rate=15.0, seed=seed)
        pol = RandomFeasible(np.random.default_rng(seed)) if policy == "random" else MecOnly()
        res = Simulator(p, pol).run()
        assert violations(res, p.num_tasks) == []


def test_invariants_hold_partial():
    p = SimParams(num_tasks=1000, seed=5)
    res = Simulator(p, RandomFeasible(np.random.default_rng(5), ratios=(0.2, 0.5, 0.9))).run()
    assert violations(res, p.num_tasks) == []


def test_deterministic():
    def run():
        p = SimParams(num_tasks=500, seed=11)
        return [(o.delay, o.server_id, o.channel) for o in Simulator(p, RandomFeasible(np.random.default_rng(1))).run().outcomes]
    assert run() == run()


def test_invariant_checker_catches_tampering():
    p = SimParams(num_tasks=300, seed=2)
    res = Simulator(p, MecOnly()).run()
    edge = [o for o in res.outcomes if o.server_id is not None]
    edge[5].t_dep += 1e-3
    edge[9].edge_work *= 1.01
    found = violations(res, p.num_tasks)
    assert any("t_dep chain" in v for v in found) and any("work" in v for v in found)
    assert violations(res, p.num_tasks + 1)[0].startswith("conservation")
