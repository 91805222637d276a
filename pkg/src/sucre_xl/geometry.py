"""Cell and array geometry, large-scale fading and visibility regions.

The array is a uniform linear array lying on the bottom edge (y = 0) of a
square cell, centred horizontally. Subarrays are contiguous runs of ``M_b``
antennas. Subarray indices are zero-based throughout the package.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from typing import IO, Iterable

import numpy as np

from .config import ConfigError, ScenarioConfig

MAX_POSITION_DRAWS = 1000


@dataclass(frozen=True)
class ArrayGeometry:
    antenna_positions: np.ndarray  # (M, 2)
    subarray_index: np.ndarray  # (M,) values in 0..B-1
    subarray_centroids: np.ndarray  # (B, 2)

    @property
    def M(self) -> int:
        return self.antenna_positions.shape[0]

    @property
    def B(self) -> int:
        return self.subarray_centroids.shape[0]


@dataclass
class UserRecord:
    """One user's frozen large-scale state plus its access bookkeeping.

    ``beta_per_sa[b]`` is zero exactly where ``vr[b]`` is False. ``theta_per_sa``
    holds the angle of the user seen from each subarray centroid, measured from
    the array broadside (+y axis).
    """

    id: int
    position: np.ndarray
    shadow_dB: float
    beta_per_sa: np.ndarray
    vr: np.ndarray
    theta_per_sa: np.ndarray
    attempts_made: int = 0
    backlogged: bool = False
    chosen_pilot: int | None = None

    @cached_property
    def total_gain(self) -> float:
        """Sum of large-scale coefficients over the visible subarrays (beta is frozen)."""
        return float(self.beta_per_sa.sum())


def build_geometry(config: ScenarioConfig) -> ArrayGeometry:
    x0 = 0.5 * (config.cell_side_m - config.array_length_m)
    if config.M == 1:
        xs = np.array([0.5 * config.cell_side_m])
    else:
        xs = x0 + np.linspace(0.0, config.array_length_m, config.M)
    positions = np.column_stack([xs, np.zeros(config.M)])
    index = np.arange(config.M) // config.M_b
    centroids = positions.reshape(config.B, config.M_b, 2).mean(axis=1)
    return ArrayGeometry(positions, index, centroids)


def pathloss_linear(d_m, shadow_dB, config: ScenarioConfig):
    """Urban-micro large-scale gain ``10^(-kappa*log10(d) + (g + shadow)/10)``.

    Works elementwise on arrays. Distances must be strictly positive.
    """
    d = np.asarray(d_m, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    out = 10.0 ** (-config.kappa * np.log10(d) + (config.g_dB + np.asarray(shadow_dB)) / 10.0)
    return float(out) if out.ndim == 0 else out


def sample_visibility(config: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """Draw a visibility bit-vector, rejecting the all-invisible outcome."""
    if config.vr_mode == "full":
        return np.ones(config.B, dtype=bool)
    if config.P_b <= 0.0:
        raise ConfigError("P_b must be > 0 to sample a visibility region")
    while True:
        vr = rng.random(config.B) < config.P_b
        if vr.any():
            return vr


def sample_user(
    geometry: ArrayGeometry, config: ScenarioConfig, rng: np.random.Generator, uid: int = 0
) -> UserRecord:
    side = config.cell_side_m
    for _ in range(MAX_POSITION_DRAWS):
        pos = rng.random(2) * side
        d = np.hypot(*(geometry.antenna_positions - pos).T)
        if d.min() >= config.d_min_m:
            break
    else:
        raise ConfigError(
            f"could not place a user at least d_min_m={config.d_min_m} m from every antenna"
        )
    shadow = float(rng.normal(0.0, config.sigma_sf_dB))
    vr = sample_visibility(config, rng)
    per_antenna = pathloss_linear(d, shadow, config)
    beta = per_antenna.reshape(config.B, config.M_b).mean(axis=1)
    beta[~vr] = 0.0
    rel = pos - geometry.subarray_centroids
    theta = np.arctan2(rel[:, 0], rel[:, 1])
    return UserRecord(uid, pos, shadow, beta, vr, theta)


def p_no_analytic(s: int, P_b: float, B: int) -> float:
    """Probability that ``s`` unconditioned Bernoulli VRs share no subarray.

    Per subarray, at most one of the ``s`` users may see it.
    """
    if s < 1:
        raise ValueError("contender count must be >= 1")
    per_sa = (1.0 - P_b) ** s + s * P_b * (1.0 - P_b) ** (s - 1)
    return float(per_sa**B)


def p_no_monte_carlo(
    s: int, config: ScenarioConfig, rng: np.random.Generator, trials: int = 10_000
) -> float:
    """Fraction of draws in which ``s`` VRs from :func:`sample_visibility` are pairwise disjoint.

    Unlike :func:`p_no_analytic` this includes the at-least-one-visible conditioning.
    """
    hits = 0
    for _ in range(trials):
        hits += vrs_pairwise_disjoint([sample_visibility(config, rng) for _ in range(s)])
    return hits / trials


def conditioned_visible_mean(P_b: float, B: int) -> float:
    """E|V| for Bernoulli(P_b) bits conditioned on at least one being set."""
    return B * P_b / (1.0 - (1.0 - P_b) ** B)


def vrs_pairwise_disjoint(vrs: Iterable[np.ndarray]) -> bool:
    vrs = list(vrs)
    if len(vrs) < 2:
        return True
    return int(np.sum(vrs, axis=0).max()) <= 1


def write_scenario_csv(users: Iterable[UserRecord], fh: IO[str]) -> None:
    """Dump positions, shadowing, VR bitmaps and the per-subarray beta table."""
    users = list(users)
    if not users:
        return
    B = users[0].vr.size
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(
        ["id", "x_m", "y_m", "shadow_dB", "vr"] + [f"beta_{b}" for b in range(B)]
    )
    for u in users:
        bits = "".join("1" if v else "0" for v in u.vr)
        writer.writerow(
            [u.id, repr(float(u.position[0])), repr(float(u.position[1])), repr(u.shadow_dB), bits]
            + [repr(float(x)) for x in u.beta_per_sa]
        )
