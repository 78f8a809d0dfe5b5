"""Piecewise-constant CPU capacity traces and exact arithmetic over them.

A trace holds ``values[i]`` on ``[update_times[i], update_times[i+1])``.  All
integrals are summed segment by segment; nothing here does numeric quadrature.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from pathlib import Path


class SegmentSampler:
    """Draws (duration, capacity) pairs for lazily extending a trace."""

    def __init__(self, f_min, f_max, rng, model="exponential", mean=1.0, low=None, high=None):
        if not (0 < f_min <= f_max):
            raise ValueError(f"capacity range must satisfy 0 < f_min <= f_max, got [{f_min}, {f_max}]")
        if model not in ("exponential", "uniform"):
            raise ValueError(f"unknown segment model {model!r}")
        if model == "exponential" and not mean > 0:
            raise ValueError("segment mean must be positive")
        if model == "uniform" and not (low is not None and high is not None and 0 < low <= high):
            raise ValueError("uniform segment model needs 0 < low <= high")
        self.f_min = float(f_min)
        self.f_max = float(f_max)
        self.rng = rng
        self.model = model
        self.mean = float(mean)
        self.low = low
        self.high = high

    def duration(self) -> float:
        if self.model == "exponential":
            d = self.rng.exponential(self.mean)
        else:
            d = self.rng.uniform(self.low, self.high)
        # zero-length segments would break strict monotonicity
        return max(float(d), 1e-9)

    def capacity(self) -> float:
        if self.f_min == self.f_max:
            return self.f_min
        return float(self.rng.uniform(self.f_min, self.f_max))


class CapacityTrace:
    """Right-continuous piecewise-constant capacity f(t), t >= 0.

    Without a sampler the last value holds forever.  With one, segments are
    appended on demand so every query time is covered.
    """

    def __init__(self, update_times, values, sampler: SegmentSampler | None = None):
        times = [float(t) for t in update_times]
        vals = [float(v) for v in values]
        if not times or len(times) != len(vals):
            raise ValueError("update_times and values must be non-empty and equally long")
        if times[0] != 0.0:
            raise ValueError("first update time must be 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("update_times must be strictly increasing")
        if any(not (v > 0 and math.isfinite(v)) for v in vals):
            raise ValueError("capacities must be positive and finite")
        self.update_times = times
        self.values = vals
        self.sampler = sampler
        # end of the last segment when a sampler is attached
        self._horizon = None
        if sampler is not None:
            self._horizon = times[-1] + sampler.duration()

    @classmethod
    def constant(cls, f):
        return cls([0.0], [f])

    def _cover(self, t):
        if self.sampler is None:
            return
        while self._horizon <= t:
            self.update_times.append(self._horizon)
            self.values.append(self.sampler.capacity())
            self._horizon += self.sampler.duration()

    def segment_index(self, t) -> int:
        if t < 0:
            raise ValueError(f"time must be non-negative, got {t}")
        self._cover(t)
        return bisect.bisect_right(self.update_times, t) - 1

    def segment_end(self, i) -> float:
        """End of segment ``i`` (inf for the open final segment of a fixed trace)."""
        if i + 1 < len(self.update_times):
            return self.update_times[i + 1]
        if self.sampler is None:
            return math.inf
        return self._horizon

    def _ensure_segment(self, i):
        while self.sampler is not None and i >= len(self.values):
            self._cover(self._horizon)

    def history(self, t, window) -> list[float]:
        """Current and past ``window`` capacities at ``t``, newest first.

        Padded with the earliest value when fewer segments exist.
        """
        i = self.segment_index(t)
        out = [self.values[j] for j in range(i, max(i - window, -1), -1)]
        out.extend([self.values[0]] * (window - len(out)))
        return out

    def to_text(self) -> str:
        return "".join(f"{t!r}\t{v!r}\n" for t, v in zip(self.update_times, self.values))

    def save(self, path):
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path):
        times, vals = [], []
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            t, v = line.split()
            times.append(float(t))
            vals.append(float(v))
        return cls(times, vals)


@dataclass(frozen=True)
class WorkAmount:
    cycles: float

    def __post_init__(self):
        if not self.cycles >= 0:
            raise ValueError(f"work must be non-negative, got {self.cycles}")


def _cycles(work) -> float:
    c = work.cycles if isinstance(work, WorkAmount) else float(work)
    if not c >= 0:
        raise ValueError(f"work must be non-negative, got {c}")
    return c


def lookup(trace: CapacityTrace, t) -> float:
    return trace.values[trace.segment_index(t)]


def cycles_between(trace: CapacityTrace, t0, t1) -> float:
    """Exact integral of f over [t0, t1]."""
    if t0 < 0 or t1 < t0:
        raise ValueError(f"need 0 <= t0 <= t1, got [{t0}, {t1}]")
    i = trace.segment_index(t0)
    trace.segment_index(t1)
    total = 0.0
    t = t0
    while True:
        end = trace.segment_end(i)
        if t1 <= end:
            return total + trace.values[i] * (t1 - t)
        total += trace.values[i] * (end - t)
        t = end
        i += 1


def time_to_complete(trace: CapacityTrace, t_start, work) -> float:
    """Smallest d >= 0 with cycles_between(t_start, t_start + d) == work."""
    remaining = _cycles(work)
    if remaining == 0.0:
        return 0.0
    i = trace.segment_index(t_start)
    t = t_start
    while True:
        f = trace.values[i]
        end = trace.segment_end(i)
        avail = f * (end - t)
        if avail > remaining:
            return (t - t_start) + remaining / f
        remaining -= avail
        t = end
        i += 1
        trace._ensure_segment(i)


def computation_energy(trace: CapacityTrace, t_start, work, kappa) -> float:
    """Energy kappa * integral f^3 dt over the window that completes ``work``.

    Full segments contribute kappa f^3 dt; the final partial segment
    contributes kappa f^2 times the cycles still left.
    """
    if kappa < 0:
        raise ValueError(f"kappa must be non-negative, got {kappa}")
    remaining = _cycles(work)
    if remaining == 0.0:
        return 0.0
    i = trace.segment_index(t_start)
    t = t_start
    energy = 0.0
    while True:
        f = trace.values[i]
        end = trace.segment_end(i)
        avail = f * (end - t)
        if avail > remaining:
            return energy + kappa * f * f * remaining
        energy += kappa * f ** 3 * (end - t)
        remaining -= avail
        t = end
        i += 1
        trace._ensure_segment(i)


def local_energy(f_user, work, kappa) -> float:
    if not f_user > 0:
        raise ValueError(f"user capability must be positive, got {f_user}")
    return kappa * f_user * f_user * _cycles(work)


def generate_trace(f_range, rng, model="exponential", mean=1.0, low=None, high=None) -> CapacityTrace:
    """Random lazily-extended trace; capacities uniform in ``f_range``."""
    f_min, f_max = f_range
    sampler = SegmentSampler(f_min, f_max, rng, model=model, mean=mean, low=low, high=high)
    return CapacityTrace([0.0], [sampler.capacity()], sampler)

