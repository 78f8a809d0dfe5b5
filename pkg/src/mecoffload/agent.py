"""Double-DQN offloading agent: state ranking, action selection, TD targets, replay."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .mlp import MLP, Adam, train_step
from .sim import OffloadDecision, SimulationIntegrityError, features


def rank_vector(scores, size, num_ranks):
    """L rounds of argmin: the j-th smallest score gets rank j, the rest 0.

    ``scores`` maps slot index -> score; ties go to the lower index.
    """
    omega = np.zeros(size)
    remaining = sorted(scores.items(), key=lambda kv: (kv[1], kv[0]))
    for j, (slot, _) in enumerate(remaining[:num_ranks], start=1):
        omega[slot] = j
    return omega


def candidate_features(request, info, ratio=1.0):
    return features(info.f_history, info.backlog, ratio * request.alpha, ratio * request.beta, info.rate)


def estimate_candidates(request, estimator, ratios=(1.0,)):
    """Estimated edge outcome for every (feasible candidate, ratio) pair."""
    feasible = [c for c in request.candidates if c.feasible]
    if not feasible:
        return feasible, np.zeros((0, len(ratios)))
    X = np.array([candidate_features(request, c, v) for c in feasible for v in ratios])
    return feasible, estimator.predict(X).reshape(len(feasible), len(ratios))


def build_state(request, delay_estimator, num_servers, num_ranks):
    """Rank vector over servers by estimated delay, plus the feasible servers."""
    feasible, est = estimate_candidates(request, delay_estimator)
    scores = {c.server: float(est[i, 0]) for i, c in enumerate(feasible)}
    return rank_vector(scores, num_servers, num_ranks), [c.server for c in feasible]


def build_state_general(request, delay_estimator, energy_estimator, weights, num_servers, num_ranks):
    """Rank by w_d * estimated delay + w_e * estimated energy."""
    feasible, tau = estimate_candidates(request, delay_estimator)
    if weights.w_energy > 0 and feasible:
        _, energy = estimate_candidates(request, energy_estimator)
    else:
        energy = np.zeros_like(tau)
    scores = {c.server: float(weights.w_delay * tau[i, 0] + weights.w_energy * energy[i, 0])
              for i, c in enumerate(feasible)}
    return rank_vector(scores, num_servers, num_ranks), [c.server for c in feasible]


def build_state_partial(request, delay_estimator, ratios, num_servers, num_ranks):
    """Rank the server x ratio grid by max(local half, estimated edge half).

    Grid slot for (server m, ratio j) is m * len(ratios) + j.
    """
    feasible, tau = estimate_candidates(request, delay_estimator, ratios)
    nv = len(ratios)
    scores = {}
    for i, c in enumerate(feasible):
        for j, v in enumerate(ratios):
            local = (1.0 - v) * request.beta / request.f_user
            scores[c.server * nv + j] = max(local, float(tau[i, j]))
    slots = [c.server * nv + j for c in feasible for j in range(nv)]
    return rank_vector(scores, num_servers * nv, num_ranks), slots


def select_action(q, epsilon, feasible, rng):
    """Epsilon-greedy over the feasible action indices; greedy ties to lowest index."""
    feasible = sorted(feasible)
    if not feasible:
        raise ValueError("empty feasible action set")
    if epsilon > 0 and rng.random() < epsilon:
        return int(feasible[rng.integers(len(feasible))])
    q = np.asarray(q)
    return int(feasible[int(np.argmax(q[feasible]))])


def td_target(q_current, action, reward, q_alpha_next, q_beta_next, feasible_next, discount):
    """Copy of ``q_current`` with the taken action's entry replaced.

    The bootstrap action comes from the evaluation network, its value from
    the target network.
    """
    target = np.array(q_current, dtype=float, copy=True)
    boot = 0.0
    if len(feasible_next):
        feasible_next = sorted(feasible_next)
        a_star = feasible_next[int(np.argmax(np.asarray(q_alpha_next)[feasible_next]))]
        boot = float(q_beta_next[a_star])
    target[action] = reward + discount * boot
    return target


class ReplayMemory:
    """Ring buffer of (state, target Q-vector); oldest entries are overwritten."""

    def __init__(self, capacity, state_dim, n_out, dtype=np.float32):
        self.capacity = int(capacity)
        self.states = np.zeros((self.capacity, state_dim), dtype=dtype)
        self.targets = np.zeros((self.capacity, n_out), dtype=dtype)
        self.size = 0
        self.pos = 0

    def push(self, state, target):
        self.states[self.pos] = state
        self.targets[self.pos] = target
        self.pos = (self.pos + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch, rng):
        idx = rng.integers(0, self.size, size=batch)
        return self.states[idx], self.targets[idx]

    def __len__(self):
        return self.size


@dataclass
class EpsilonSchedule:
    start: float = 1.0
    end: float = 0.01
    decay_steps: int = 5000

    def __call__(self, step):
        if self.decay_steps <= 0 or step >= self.decay_steps:
            return self.end
        return self.start + (self.end - self.start) * step / self.decay_steps


class DoubleDQN:
    """Evaluation and target networks with Q-vector replay."""

    def __init__(self, n_in, n_out, *, hidden=(512, 512), learning_rate=1e-3, discount=0.95,
                 batch_size=32, replay_capacity=100_000, sync_period=1, rng=None, dtype=np.float32):
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.alpha_net = MLP([n_in, *hidden, n_out], self.rng, dtype=dtype)
        self.beta_net = self.alpha_net.clone()
        self.opt = Adam(self.alpha_net.params, lr=learning_rate)
        self.discount = discount
        self.batch_size = batch_size
        self.sync_period = max(int(sync_period), 1)
        self.memory = ReplayMemory(replay_capacity, n_in, n_out, dtype=dtype)
        self.updates = 0
        self.last_loss = None

    @property
    def n_out(self):
        return self.alpha_net.sizes[-1]

    def q_values(self, state):
        return self.alpha_net.forward(state)

    def learn(self, state, q_current, action, reward, next_state, feasible_next):
        """TD target, store, one training step, then sync on schedule."""
        q_a = self.alpha_net.forward(next_state)
        q_b = self.beta_net.forward(next_state)
        target = td_target(q_current, action, reward, q_a, q_b, feasible_next, self.discount)
        self.memory.push(state, target)
        self.train_and_sync()
        return target

    def shift_values(self, delta):
        """Add ``delta`` to every Q output of both networks."""
        for net in (self.alpha_net, self.beta_net):
            net.biases[-1] += np.asarray(delta, dtype=net.dtype)

    def train_and_sync(self):
        if len(self.memory) >= self.batch_size:
            xs, ys = self.memory.sample(self.batch_size, self.rng)
            self.last_loss = train_step(self.alpha_net, self.opt, xs, ys)
        self.updates += 1
        if self.updates % self.sync_period == 0:
            self.beta_net.copy_from(self.alpha_net)


def action_to_strategy(action, channels, ratios=None):
    """Map a Q-network output index to an offloading decision.

    ``channels`` maps server index -> best free channel (or None).  Without
    ``ratios`` index 0 is local and m+1 is server m; with them index
    m * len(ratios) + j is server m at ratio ``ratios[j]``.
    """
    if ratios is None:
        if action == 0:
            return OffloadDecision.local()
        server, ratio = action - 1, 1.0
    else:
        server, j = divmod(action, len(ratios))
        ratio = ratios[j]
    n = channels.get(server)
    if n is None:
        raise SimulationIntegrityError(f"action {action} names server {server} without a free channel")
    return OffloadDecision.offload(server, n, ratio)


CHECKPOINT_VERSION = 1


def save_checkpoint(path, dqn: DoubleDQN, *, steps, history):
    """Both parameter sets, the exploration step counter and the action history.

    The replay memory and optimizer moments are not saved, so a restored
    agent starts training from an empty memory.
    """
    meta = {"version": CHECKPOINT_VERSION, "sizes": dqn.alpha_net.sizes, "steps": int(steps),
            "history": [int(a) for a in history], "updates": dqn.updates,
            "dtype": dqn.alpha_net.dtype.name}
    arrays = {f"alpha{i}": p for i, p in enumerate(dqn.alpha_net.params)}
    arrays.update({f"beta{i}": p for i, p in enumerate(dqn.beta_net.params)})
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path, dqn: DoubleDQN):
    """Restore parameters into ``dqn``; returns (steps, history)."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint format {meta.get('version')}")
        if meta["sizes"] != dqn.alpha_net.sizes:
            raise ValueError(f"checkpoint sizes {meta['sizes']} do not match {dqn.alpha_net.sizes}")
        for i, p in enumerate(dqn.alpha_net.params):
            p[...] = data[f"alpha{i}"]
        for i, p in enumerate(dqn.beta_net.params):
            p[...] = data[f"beta{i}"]
    dqn.updates = meta["updates"]
    return meta["steps"], meta["history"]
