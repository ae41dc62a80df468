"""Test-phase statistics: availability, outage runs, CDFs and Pareto filtering."""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

GATE_EPISODE_FRACTION = 0.9


class MetricsDomainError(ValueError):
    pass


@dataclass
class EpisodeLog:
    """Per-step record of one test episode."""

    outage_probs: list = field(default_factory=list)
    outage_flags: list = field(default_factory=list)
    scaled_energies: list = field(default_factory=list)
    rewards: list = field(default_factory=list)

    def append(self, outcome) -> None:
        self.outage_probs.append(outcome.outage_prob)
        self.outage_flags.append(outcome.outage_flag)
        self.scaled_energies.append(outcome.scaled_energy)
        self.rewards.append(outcome.reward)

    def __len__(self) -> int:
        return len(self.outage_flags)


@dataclass(frozen=True)
class ParetoPoint:
    energy: float
    exceedance: float
    label: str = ""

    def __post_init__(self):
        for name in ("energy", "exceedance"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise MetricsDomainError(f"{name} must be finite and >= 0, got {v}")

    def dominates(self, other: "ParetoPoint") -> bool:
        return (self.energy <= other.energy and self.exceedance <= other.exceedance
                and (self.energy < other.energy or self.exceedance < other.exceedance))


@dataclass
class TrialResult:
    weight_outage: float
    episode_availability: list
    gate_passed: bool
    mean_energy_fraction: float
    exceedance_prob: float
    run_length_histogram: dict
    mean_scaled_energy: float = 0.0
    episode_mean_energy: list = field(default_factory=list)
    run_exceedance_prob: float = 0.0
    max_run_length: int = 0
    mean_reward: float = 0.0

    def pareto_point(self, label: str = "") -> ParetoPoint:
        return ParetoPoint(self.mean_scaled_energy, self.exceedance_prob, label)


def availability(log, threshold: float) -> float:
    """Fraction of steps whose outage probability meets ``threshold``."""
    probs = np.asarray(log.outage_probs if isinstance(log, EpisodeLog) else log, dtype=float)
    if probs.size == 0:
        raise MetricsDomainError("availability of an empty log")
    return float(np.count_nonzero(probs <= threshold)) / probs.size


def run_lengths(flags: Iterable[bool]) -> dict:
    """Histogram {run length: count} of maximal runs of true flags."""
    f = np.asarray(list(flags), dtype=bool)
    if f.size == 0 or not f.any():
        return {}
    padded = np.concatenate(([False], f, [False])).astype(np.int8)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    lengths, counts = np.unique(stops - starts, return_counts=True)
    return {int(k): int(c) for k, c in zip(lengths, counts)}


def consecutive_counter(flags: Iterable[bool]) -> np.ndarray:
    """Running length of the current outage run at every step."""
    out = []
    c = 0
    for f in flags:
        c = c + 1 if f else 0
        out.append(c)
    return np.asarray(out, dtype=np.int64)


def exceedance_probability(logs, consec_threshold: int) -> float:
    """Fraction of steps (pooled over episodes) whose running counter exceeds the threshold.

    The counter restarts at every episode boundary.
    """
    if consec_threshold < 0:
        raise MetricsDomainError("consec_threshold must be >= 0")
    hits = total = 0
    for log in logs:
        flags = log.outage_flags if isinstance(log, EpisodeLog) else log
        counter = consecutive_counter(flags)
        hits += int(np.count_nonzero(counter > consec_threshold))
        total += counter.size
    return hits / total if total else 0.0


def run_exceedance_probability(histogram: dict, consec_threshold: int) -> float:
    """Share of outage runs longer than the threshold (per-run variant)."""
    runs = sum(histogram.values())
    if runs == 0:
        return 0.0
    return sum(c for k, c in histogram.items() if k > consec_threshold) / runs


def merge_histograms(histograms: Iterable[dict]) -> dict:
    total = Counter()
    for h in histograms:
        total.update(h)
    return dict(sorted(total.items()))


def empirical_cdf(values) -> tuple[np.ndarray, np.ndarray]:
    """Right-continuous ECDF as (distinct sorted values, fraction <= value)."""
    x = np.sort(np.asarray(values, dtype=float).ravel())
    if x.size == 0:
        raise MetricsDomainError("empirical CDF of no values")
    distinct, counts = np.unique(x, return_counts=True)
    return distinct, np.cumsum(counts) / x.size


def percentile(values, q: float) -> float:
    """Nearest-rank percentile, ``q`` in [0, 1]."""
    x = np.sort(np.asarray(values, dtype=float).ravel())
    if x.size == 0:
        raise MetricsDomainError("percentile of no values")
    if not 0.0 <= q <= 1.0:
        raise MetricsDomainError(f"q must lie in [0, 1], got {q}")
    rank = max(1, math.ceil(q * x.size))
    return float(x[rank - 1])


def pareto_filter(points: Sequence[ParetoPoint]) -> list[ParetoPoint]:
    """Non-dominated subset, both coordinates minimised, input order kept.

    Sort by energy, then sweep: a point survives when it beats the best
    exceedance seen at strictly lower energy and ties the minimum within its
    own energy level.
    """
    pts = list(points)
    if not pts:
        return []
    energy = np.array([p.energy for p in pts])
    exc = np.array([p.exceedance for p in pts])
    order = np.lexsort((exc, energy))
    keep = np.zeros(len(pts), dtype=bool)
    best_below = math.inf
    i = 0
    while i < len(order):
        j = i
        while j < len(order) and energy[order[j]] == energy[order[i]]:
            j += 1
        group = order[i:j]
        level_min = exc[group[0]]
        if level_min < best_below:
            keep[group[exc[group] == level_min]] = True
        best_below = min(best_below, level_min)
        i = j
    return [p for p, k in zip(pts, keep) if k]


def gate_passed(episode_availability, target: float,
                fraction: float = GATE_EPISODE_FRACTION) -> bool:
    a = np.asarray(episode_availability, dtype=float)
    if a.size == 0:
        raise MetricsDomainError("gate needs at least one episode")
    return bool(np.count_nonzero(a >= target) >= fraction * a.size)


def summarize(logs: Sequence[EpisodeLog], config, weight_outage: float | None = None) -> TrialResult:
    """Reduce test-phase logs to a TrialResult under an EnvConfig."""
    if not logs:
        raise MetricsDomainError("no episodes to summarise")
    avail = [availability(log, config.outage_threshold) for log in logs]
    hist = merge_histograms(run_lengths(log.outage_flags) for log in logs)
    ep_energy = [float(np.mean(log.scaled_energies)) for log in logs]
    all_energy = np.concatenate([np.asarray(log.scaled_energies, dtype=float) for log in logs])
    mean_energy = float(np.mean(all_energy))
    rewards = np.concatenate([np.asarray(log.rewards, dtype=float) for log in logs])
    return TrialResult(
        weight_outage=config.weight_outage if weight_outage is None else weight_outage,
        episode_availability=avail,
        gate_passed=gate_passed(avail, config.availability_target),
        mean_energy_fraction=mean_energy / config.max_energy,
        exceedance_prob=exceedance_probability(logs, config.consec_threshold),
        run_length_histogram=hist,
        mean_scaled_energy=mean_energy,
        episode_mean_energy=ep_energy,
        run_exceedance_prob=run_exceedance_probability(hist, config.consec_threshold),
        max_run_length=max(hist) if hist else 0,
        mean_reward=float(np.mean(rewards)),
    )


# --- CSV ------------------------------------------------------------------

def fmt(x) -> str:
    """Float text that reads back to the same double."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_cdf_csv(path, values) -> Path:
    xs, ps = empirical_cdf(values)
    return write_csv(path, ("value", "cdf"), zip(xs, ps))


def write_pareto_csv(path, points: Sequence[ParetoPoint]) -> Path:
    return write_csv(path, ("label", "energy", "exceedance"),
                     ((p.label, p.energy, p.exceedance) for p in points))


def read_pareto_csv(path) -> list[ParetoPoint]:
    _, rows = read_csv(path)
    return [ParetoPoint(float(e), float(x), label) for label, e, x in rows]
