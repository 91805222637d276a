"""Streaming access metrics: PRC, estimator NMSE, attempts, xi and lambda.

Ratios whose denominator is zero come back as ``None``; they are undefined,
not zero.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, fields
from typing import Iterable

import numpy as np

from .protocol import ContentionOutcome


@dataclass
class MetricAccumulator:
    """Mergeable counters for one campaign, or for several merged shards.

    A *collision* is a pilot-block with at least two step-1 contenders. It is
    *resolved* when somebody on that pilot is admitted. The ``overlap_*``
    counters restrict both to pilot-blocks whose contenders have overlapping
    visibility regions.
    """

    n_blocks: int = 0
    collision_count: int = 0
    resolved_count: int = 0
    overlap_collision_count: int = 0
    overlap_resolved_count: int = 0
    admitted_in_resolved: int = 0
    nmse_sum: float = 0.0
    nmse_rel_sum: float = 0.0
    nmse_count: int = 0
    infinite_estimates: int = 0
    admitted_total: int = 0
    failed_total: int = 0
    attempter_total: int = 0
    attempts_hist: Counter = field(default_factory=Counter)

    def add_block(self, outcomes: Iterable[ContentionOutcome], n_attempters: int) -> None:
        self.n_blocks += 1
        self.attempter_total += n_attempters
        for oc in outcomes:
            if len(oc.contenders) >= 2:
                resolved = len(oc.admitted) > 0
                self.collision_count += 1
                self.resolved_count += resolved
                if resolved:
                    self.admitted_in_resolved += len(oc.admitted)
                if oc.contenders_overlap:
                    self.overlap_collision_count += 1
                    self.overlap_resolved_count += resolved
            for d in oc.decisions:
                self.add_estimate(d.alpha_hat, oc.alpha_true)

    def add_estimate(self, alpha_hat: float, alpha_true: float) -> None:
        if math.isinf(alpha_hat):
            self.infinite_estimates += 1
            return
        err2 = (alpha_hat - alpha_true) ** 2
        self.nmse_sum += err2 / alpha_true
        self.nmse_rel_sum += err2 / alpha_true**2
        self.nmse_count += 1

    def add_terminal(self, attempts: int, admitted: bool) -> None:
        self.attempts_hist[attempts] += 1
        if admitted:
            self.admitted_total += 1
        else:
            self.failed_total += 1

    def merge(self, other: "MetricAccumulator") -> "MetricAccumulator":
        out = MetricAccumulator()
        for f in fields(self):
            setattr(out, f.name, getattr(self, f.name) + getattr(other, f.name))
        return out

    __add__ = merge

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["attempts_hist"] = {str(k): v for k, v in sorted(self.attempts_hist.items())}
        return d


@dataclass(frozen=True)
class AccessStats:
    avg_attempts: float | None
    failed_fraction: float | None
    xi: float | None
    lam: float | None
    admitted_total: int

    @property
    def Lambda(self) -> int:
        """Total admitted users; equals ``lam * K * P_a * n_blocks``."""
        return self.admitted_total


def _ratio(num, den) -> float | None:
    return num / den if den else None


def prc(acc: MetricAccumulator, overlap_only: bool = False) -> float | None:
    if overlap_only:
        return _ratio(acc.overlap_resolved_count, acc.overlap_collision_count)
    return _ratio(acc.resolved_count, acc.collision_count)


def nmse(acc: MetricAccumulator) -> float | None:
    """Mean of ``(alpha_hat - alpha)^2 / alpha`` over every recorded estimate."""
    return _ratio(acc.nmse_sum, acc.nmse_count)


def nmse_relative(acc: MetricAccumulator) -> float | None:
    """Scale-free companion of :func:`nmse`: mean of ``((alpha_hat - alpha) / alpha)^2``."""
    return _ratio(acc.nmse_rel_sum, acc.nmse_count)


def access_stats(acc: MetricAccumulator, K: int, P_a: float) -> AccessStats:
    terminal = sum(acc.attempts_hist.values())
    total_attempts = sum(k * v for k, v in acc.attempts_hist.items())
    offered = K * P_a * acc.n_blocks
    return AccessStats(
        avg_attempts=_ratio(total_attempts, terminal),
        failed_fraction=_ratio(acc.failed_total, acc.admitted_total + acc.failed_total),
        xi=_ratio(acc.admitted_in_resolved, acc.resolved_count),
        lam=_ratio(acc.admitted_total, offered),
        admitted_total=acc.admitted_total,
    )


def summarize(acc: MetricAccumulator, K: int, P_a: float) -> dict[str, float | None]:
    stats = access_stats(acc, K, P_a)
    return {
        "prc": prc(acc),
        "prc_overlap": prc(acc, overlap_only=True),
        "nmse": nmse(acc),
        "nmse_rel": nmse_relative(acc),
        "avg_attempts": stats.avg_attempts,
        "failed_fraction": stats.failed_fraction,
        "xi": stats.xi,
        "lambda": stats.lam,
    }


def mean_ci(values: Iterable[float | None], z: float = 1.96) -> tuple[float | None, float | None]:
    """Mean and normal-approximation half-width over shard values (``None`` skipped)."""
    vals = np.array([v for v in values if v is not None], dtype=float)
    if vals.size == 0:
        return None, None
    if vals.size == 1:
        return float(vals[0]), None
    return float(vals.mean()), float(z * vals.std(ddof=1) / math.sqrt(vals.size))
