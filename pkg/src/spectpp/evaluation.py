"""Sampling-quality metrics: time-rescaling KS tests against ground-truth
processes, 1-D Wasserstein and categorical earth-mover distances between
sample sets, likelihood discrepancies, and next-event divergence between
autoregressive and speculative sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .classical import GroundTruthProcess, total_compensator_increments
from .core import EventSequence, RngStream
from .model import MarkDistribution, ModelCheckpoint
from .sampler import ar_next_event, sd_next_event

KS_BAND_COEFFICIENT = 1.36  # 95% confidence band c(alpha)/sqrt(n)


@dataclass(frozen=True)
class KsReport:
    """One-sample KS test of rescaled intervals against Exponential(1)."""

    d_ks: float
    n: int
    band: float
    passed: bool
    plot_data: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class MetricRecord:
    """Named scalar metrics for one experiment row; absent metrics are None."""

    delta_l: float | None = None
    d_ks: float | None = None
    d_ws_t: float | None = None
    d_ws_k: float | None = None
    alpha: float | None = None
    t_ar: float | None = None
    t_sd: float | None = None
    speedup: float | None = None

    def __post_init__(self) -> None:
        if self.t_ar is not None and self.t_sd is not None and self.speedup is not None:
            if abs(self.speedup - self.t_ar / self.t_sd) > 1e-9 * max(1.0, abs(self.speedup)):
                raise ValueError("speedup must equal t_ar / t_sd")

    @classmethod
    def with_speedup(cls, t_ar: float, t_sd: float, **kw) -> "MetricRecord":
        return cls(t_ar=t_ar, t_sd=t_sd, speedup=t_ar / t_sd, **kw)


def time_rescale(seq: EventSequence, process: GroundTruthProcess) -> np.ndarray:
    """Compensator increments between consecutive events (first from 0),
    summed over event types; Exponential(1) iid when the process is right."""
    return total_compensator_increments(process, seq)


def ks_statistic(samples: Sequence[float]) -> KsReport:
    """Exact sup-distance between the empirical CDF and 1 - e^{-x}.

    The supremum over the step function is attained just before or at a
    sorted sample, so both one-sided gaps are evaluated at every point.
    Plot data pairs (F(z_(i)), F_n(z_(i))) are emitted for KS plots.
    """
    z = np.sort(np.asarray(samples, dtype=float))
    n = z.size
    if n < 1:
        raise ValueError("ks_statistic requires at least one sample")
    theo = 1.0 - np.exp(-z)
    steps = np.arange(1, n + 1) / n
    d_ks = float(max(np.max(steps - theo), np.max(theo - (steps - 1.0 / n))))
    band = KS_BAND_COEFFICIENT / math.sqrt(n)
    plot = tuple(zip(theo.tolist(), steps.tolist()))
    return KsReport(d_ks=d_ks, n=n, band=band, passed=d_ks < band, plot_data=plot)


def wasserstein_1d(xs: Sequence[float], ys: Sequence[float]) -> float:
    """1-Wasserstein distance between two empirical distributions.

    Equal sizes reduce to the mean absolute difference of sorted samples;
    otherwise the quantile functions are integrated over the merged
    quantile grid.
    """
    xs = np.sort(np.asarray(xs, dtype=float))
    ys = np.sort(np.asarray(ys, dtype=float))
    if xs.size == 0 or ys.size == 0:
        raise ValueError("wasserstein_1d requires nonempty samples")
    if xs.size == ys.size:
        return float(np.mean(np.abs(xs - ys)))
    n, m = xs.size, ys.size
    edges = np.union1d(np.arange(1, n) / n, np.arange(1, m) / m)
    edges = np.concatenate([[0.0], edges, [1.0]])
    widths = np.diff(edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    qx = xs[np.minimum((mids * n).astype(int), n - 1)]
    qy = ys[np.minimum((mids * m).astype(int), m - 1)]
    return float(np.sum(widths * np.abs(qx - qy)))


def _as_probabilities(dist) -> np.ndarray:
    if isinstance(dist, MarkDistribution):
        return dist.probabilities
    arr = np.asarray(dist, dtype=float)
    total = float(np.sum(arr))
    if total <= 0:
        raise ValueError("counts must have positive total")
    return arr / total


def categorical_emd(p, q) -> float:
    """Earth mover's distance between mark distributions under the 0/1
    ground metric, i.e. half the L1 distance. Accepts probability vectors,
    MarkDistribution, or unnormalized count vectors."""
    pp, qq = _as_probabilities(p), _as_probabilities(q)
    if pp.shape != qq.shape:
        raise ValueError("distributions must share the mark cardinality")
    return 0.5 * float(np.sum(np.abs(pp - qq)))


def mean_loglik_per_event(sequences: Sequence[EventSequence],
                          scorer: Callable[[EventSequence], float]) -> float:
    """Total log-likelihood over the set divided by the total event count."""
    total = 0.0
    events = 0
    for seq in sequences:
        total += scorer(seq)
        events += len(seq)
    if events == 0:
        raise ValueError("likelihood normalization requires at least one event")
    return total / events


def likelihood_discrepancy(sequences: Sequence[EventSequence],
                           scorer_a: Callable[[EventSequence], float],
                           scorer_b: Callable[[EventSequence], float],
                           sequences_b: Sequence[EventSequence] | None = None) -> float:
    """|mean-per-event log-likelihood under A minus the same under B|.

    By default both scorers run on the same sequences; pass ``sequences_b``
    to compare two sample sets under their own scorers.
    """
    a = mean_loglik_per_event(sequences, scorer_a)
    b = mean_loglik_per_event(sequences if sequences_b is None else sequences_b, scorer_b)
    return abs(a - b)


def next_event_divergence(target: ModelCheckpoint, draft: ModelCheckpoint | None,
                          history: EventSequence, m_hist: int, n_reps: int,
                          gamma: int, rng: RngStream,
                          policy: str = "adjusted") -> tuple[float, float]:
    """Wasserstein/EMD distances between N autoregressive and N speculative
    draws of the event following an m_hist-event history prefix.

    With ``draft=None`` the second sample is another independent
    autoregressive run, which serves as the self-comparison baseline.
    """
    if len(history) < m_hist:
        raise ValueError(f"history has {len(history)} events, need at least {m_hist}")
    prefix = EventSequence(history.events[:m_hist], history.t_end)
    k = target.config.n_marks
    ar_times, ar_marks, other_times, other_marks = [], [], [], []
    for i in range(n_reps):
        event = ar_next_event(target, prefix, rng.child(f"ar{i}"))
        ar_times.append(event.time)
        ar_marks.append(event.mark)
        if draft is None:
            event = ar_next_event(target, prefix, rng.child(f"ar2-{i}"))
        else:
            event = sd_next_event(target, draft, prefix, gamma, rng.child(f"sd{i}"), policy)
        other_times.append(event.time)
        other_marks.append(event.mark)
    d_t = wasserstein_1d(ar_times, other_times)
    d_k = categorical_emd(np.bincount(ar_marks, minlength=k),
                          np.bincount(other_marks, minlength=k))
    return d_t, d_k
