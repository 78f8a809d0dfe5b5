"""Independent checks of a finished simulation, used by unit and acceptance tests."""
from collections import defaultdict

from mecoffload import capacity

CHAIN_TOL = 1e-9
WORK_RTOL = 1e-9


def violations(result, num_arrivals):
    """List of human-readable invariant violations; empty when the run is sound."""
    bad = []
    outs = result.outcomes
    if len(outs) != num_arrivals or len({o.task_id for o in outs}) != num_arrivals:
        bad.append(f"conservation: {len(outs)} departures for {num_arrivals} arrivals")
    per_server = defaultdict(list)
    per_channel = defaultdict(list)
    for o in outs:
        if o.server_id is None:
            if abs(o.delay - o.tau_local) > CHAIN_TOL:
                bad.append(f"task {o.task_id}: local delay {o.delay} != {o.tau_local}")
            continue
        if abs(o.t_queue - (o.t_arr + o.tau_trans)) > CHAIN_TOL:
            bad.append(f"task {o.task_id}: t_queue chain")
        if abs(o.t_comp - (o.t_queue + o.tau_queue)) > CHAIN_TOL or o.tau_queue < -CHAIN_TOL:
            bad.append(f"task {o.task_id}: t_comp chain")
        if abs(o.t_dep - (o.t_comp + o.tau_comp)) > CHAIN_TOL:
            bad.append(f"task {o.task_id}: t_dep chain")
        if abs(o.delay - max(o.tau_local, o.tau_trans + o.tau_queue + o.tau_comp)) > CHAIN_TOL:
            bad.append(f"task {o.task_id}: delay is not the sum of its parts")
        m = o.server_id - 1
        done = capacity.cycles_between(result.servers[m].trace, o.t_comp, o.t_dep)
        if abs(done - o.edge_work) > WORK_RTOL * o.edge_work:
            bad.append(f"task {o.task_id}: work {done} != {o.edge_work}")
        per_server[m].append(o)
        per_channel[(m, o.channel)].append((o.t_arr, o.t_queue, o.task_id))
    for m, jobs in per_server.items():
        by_queue = sorted(jobs, key=lambda o: (o.t_queue, o.task_id))
        comps = [o.t_comp for o in by_queue]
        if any(b < a for a, b in zip(comps, comps[1:])):
            bad.append(f"server {m}: FIFO order broken")
        by_comp = sorted(jobs, key=lambda o: o.t_comp)
        if any(b.t_comp < a.t_dep - CHAIN_TOL for a, b in zip(by_comp, by_comp[1:])):
            bad.append(f"server {m}: two tasks in service at once")
    for key, uploads in per_channel.items():
        uploads.sort()
        for (a0, a1, ka), (b0, _, kb) in zip(uploads, uploads[1:]):
            if b0 < a1:
                bad.append(f"channel {key}: uploads {ka} and {kb} overlap")
    return bad
