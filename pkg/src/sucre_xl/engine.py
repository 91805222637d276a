"""Sequential RA-block campaigns with ALOHA-style retries.

Every one of the ``K`` pooled users is either idle or backlogged. Idle users
attempt with probability ``P_a``; backlogged users only ever re-attempt with
``retry_prob``. Users leave the pool when admitted or after ``max_attempts``
failed attempts, and a freshly sampled user takes their slot.

Three independent random streams are spawned from the campaign seed:
population (positions, shadowing, VRs), access (arrivals, retries, pilot
choice) and radio (fading and noise). The baseline never touches the radio
stream, so its outcome does not depend on the channel model.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from .channel import CorrelationSpec, sample_channels
from .config import ScenarioConfig
from .geometry import ArrayGeometry, UserRecord, build_geometry, sample_user
from .metrics import MetricAccumulator, summarize
from .protocol import MODES, ContentionOutcome, pilot_book, resolve_block

log = logging.getLogger(__name__)


@dataclass
class RngStreams:
    population: np.random.Generator
    access: np.random.Generator
    radio: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "RngStreams":
        pop, acc, rad = np.random.SeedSequence(seed).spawn(3)
        return cls(np.random.default_rng(pop), np.random.default_rng(acc), np.random.default_rng(rad))


@dataclass
class PoolState:
    """Pool of ``K`` users plus the running block index."""

    users: list[UserRecord]
    geometry: ArrayGeometry
    next_id: int
    block: int = 0
    distinct_attempters: int = 0

    @classmethod
    def initial(cls, config: ScenarioConfig, rng: np.random.Generator) -> "PoolState":
        geometry = build_geometry(config)
        users = [sample_user(geometry, config, rng, uid=i) for i in range(config.K)]
        return cls(users, geometry, next_id=config.K)

    @property
    def backlog(self) -> dict[int, int]:
        return {u.id: u.attempts_made for u in self.users if u.backlogged}


@dataclass
class BlockResult:
    outcomes: list[ContentionOutcome]
    contender_counts: np.ndarray  # (tau_p,)
    admitted: list[tuple[int, int]]  # (user id, attempts)
    failed: list[int]
    n_attempters: int


def run_block(
    state: PoolState,
    config: ScenarioConfig,
    spec: CorrelationSpec,
    mode: str,
    streams: RngStreams,
    pilots: np.ndarray | None = None,
) -> BlockResult:
    users = state.users
    u = streams.access.random(len(users))
    backlogged = np.fromiter((x.backlogged for x in users), bool, len(users))
    threshold = np.where(backlogged, config.retry_prob, config.P_a)
    idx = np.flatnonzero(u < threshold)
    chosen = streams.access.integers(config.tau_p, size=idx.size)

    transmitters = []
    for i, t in zip(idx, chosen):
        user = users[i]
        if user.attempts_made == 0:
            state.distinct_attempters += 1
        user.attempts_made += 1
        user.chosen_pilot = int(t)
        transmitters.append((user, int(t)))

    if mode == "baseline" or not transmitters:
        channels = None
    else:
        channels = sample_channels([x for x, _ in transmitters], spec, config, streams.radio)
    outcomes = resolve_block(transmitters, channels, config, mode, streams.radio, pilots)
    admitted_ids = {k for oc in outcomes for k in oc.admitted}

    admitted, failed = [], []
    for i in idx:
        user = users[i]
        if user.id in admitted_ids:
            admitted.append((user.id, user.attempts_made))
        elif user.attempts_made >= config.max_attempts:
            failed.append(user.id)
        else:
            user.backlogged = True
            user.chosen_pilot = None
            continue
        users[i] = sample_user(state.geometry, config, streams.population, uid=state.next_id)
        state.next_id += 1

    counts = np.bincount(chosen, minlength=config.tau_p)
    state.block += 1
    return BlockResult(outcomes, counts, admitted, failed, idx.size)


@dataclass
class CampaignResult:
    config: ScenarioConfig
    mode: str
    seed: int
    metrics: MetricAccumulator
    contender_counts: np.ndarray  # (n_blocks, tau_p)
    still_backlogged: int
    distinct_attempters: int
    outcomes: list[list[ContentionOutcome]] = field(default_factory=list)

    @property
    def admitted_total(self) -> int:
        return self.metrics.admitted_total

    @property
    def failed_total(self) -> int:
        return self.metrics.failed_total

    def totals(self) -> dict:
        return {
            "admitted": self.metrics.admitted_total,
            "failed": self.metrics.failed_total,
            "still_backlogged": self.still_backlogged,
            "distinct_attempters": self.distinct_attempters,
            "attempts_hist": {str(k): v for k, v in sorted(self.metrics.attempts_hist.items())},
        }

    def to_json(self) -> str:
        doc = {
            "mode": self.mode,
            "seed": self.seed,
            "config": self.config.to_dict(),
            "totals": self.totals(),
            "metrics": summarize(self.metrics, self.config.K, self.config.P_a),
            "accumulator": self.metrics.to_dict(),
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def run_campaign(
    config: ScenarioConfig,
    mode: str,
    seed: int,
    spec: CorrelationSpec | None = None,
    keep_outcomes: bool = False,
    trace: IO[str] | None = None,
    block_csv: IO[str] | None = None,
) -> CampaignResult:
    """Run ``config.n_blocks`` sequential RA blocks; deterministic in ``(config, mode, seed)``.

    ``trace`` receives one JSON line per occupied pilot and ``block_csv`` one
    summary row per block.
    """
    if mode not in MODES:
        raise ValueError(f"unknown protocol mode {mode!r}")
    spec = spec or CorrelationSpec.from_config(config)
    streams = RngStreams.from_seed(seed)
    state = PoolState.initial(config, streams.population)
    pilots = pilot_book(config.tau_p)
    acc = MetricAccumulator()
    counts = np.zeros((config.n_blocks, config.tau_p), dtype=np.int64)
    kept = []
    if block_csv is not None:
        writer = csv.writer(block_csv, lineterminator="\n")
        writer.writerow(["block", "attempters", "collisions", "resolved", "admitted", "failed"])
    for n in range(config.n_blocks):
        res = run_block(state, config, spec, mode, streams, pilots)
        counts[n] = res.contender_counts
        acc.add_block(res.outcomes, res.n_attempters)
        for _, attempts in res.admitted:
            acc.add_terminal(attempts, admitted=True)
        for _ in res.failed:
            acc.add_terminal(config.max_attempts, admitted=False)
        if keep_outcomes:
            kept.append(res.outcomes)
        if trace is not None:
            for oc in res.outcomes:
                trace.write(json.dumps(oc.to_trace(n), sort_keys=True) + "\n")
        if block_csv is not None:
            coll = [oc for oc in res.outcomes if len(oc.contenders) >= 2]
            writer.writerow(
                [n, res.n_attempters, len(coll), sum(bool(oc.admitted) for oc in coll),
                 len(res.admitted), len(res.failed)]
            )
    log.debug("campaign mode=%s seed=%d done: %d admitted", mode, seed, acc.admitted_total)
    backlog = sum(u.backlogged for u in state.users)
    return CampaignResult(config, mode, seed, acc, counts, backlog, state.distinct_attempters, kept)
