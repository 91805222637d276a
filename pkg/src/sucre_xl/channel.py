"""Small-scale Rayleigh fading per (user, subarray).

Channels are drawn as ``sqrt(beta) * L @ w`` with ``L L^H = R`` and ``w`` a
standard circularly-symmetric complex Gaussian vector. The exponential model
``R[i, l] = r^|l-i| * exp(j*theta*(l-i))`` factors as ``D T D^H`` with ``T`` the
real Kac-Murdock-Szego matrix and ``D = diag(exp(-j*theta*i))``, so only the
Cholesky factor of ``T`` (which depends on ``r`` and ``M_b`` alone) is cached.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .config import ScenarioConfig
from .geometry import UserRecord

# Mapping user id -> complex array of shape (B, M_b); invisible rows are zero.
ChannelRealization = dict


@dataclass(frozen=True)
class CorrelationSpec:
    mode: str = "iid"
    r: float = 0.7

    def __post_init__(self):
        if self.mode not in ("iid", "exponential"):
            raise ValueError(f"unknown correlation mode {self.mode!r}")
        if self.mode == "exponential" and not 0.0 < self.r < 1.0:
            raise ValueError(f"correlation index must lie in (0, 1), got {self.r}")

    @classmethod
    def from_config(cls, config: ScenarioConfig) -> "CorrelationSpec":
        mode = "exponential" if config.channel == "correlated" else "iid"
        return cls(mode, config.r)


def correlation_matrix(theta: float, r: float, M_b: int) -> np.ndarray:
    if not 0.0 < r < 1.0:
        raise ValueError(f"correlation index must lie in (0, 1), got {r}")
    idx = np.arange(M_b)
    lag = idx[None, :] - idx[:, None]  # l - i
    return r ** np.abs(lag) * np.exp(1j * theta * lag)


@lru_cache(maxsize=256)
def _toeplitz_factor(r: float, M_b: int) -> np.ndarray:
    idx = np.arange(M_b)
    T = r ** np.abs(idx[None, :] - idx[:, None])
    L = np.linalg.cholesky(T)
    L.setflags(write=False)
    return L


def correlation_factor(theta: float, r: float, M_b: int) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.conj().T == correlation_matrix(theta, r, M_b)``."""
    phase = np.exp(-1j * theta * np.arange(M_b))
    return phase[:, None] * _toeplitz_factor(float(r), int(M_b))


def standard_cn(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_channel(
    user: UserRecord, spec: CorrelationSpec, config: ScenarioConfig, rng: np.random.Generator
) -> np.ndarray:
    """Return the (B, M_b) channel of one user for one RA block.

    The same number of Gaussian draws is consumed whatever the VR or the
    correlation mode, so seed-matched runs see common random numbers.
    """
    B, M_b = config.B, config.M_b
    w = standard_cn(rng, (B, M_b))
    if spec.mode == "exponential":
        L = _toeplitz_factor(float(spec.r), M_b)
        phase = np.exp(-1j * np.outer(user.theta_per_sa, np.arange(M_b)))
        w = phase * (w @ L.T)
    return np.sqrt(user.beta_per_sa)[:, None] * w


def sample_channels(users, spec: CorrelationSpec, config: ScenarioConfig, rng) -> ChannelRealization:
    return {u.id: sample_channel(u, spec, config, rng) for u in users}


def write_channel_csv(realization: ChannelRealization, fh) -> None:
    """Dump one realization as rows ``user, subarray, antenna, re, im``."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["user", "subarray", "antenna", "re", "im"])
    for uid in sorted(realization):
        h = realization[uid]
        for b, m in np.ndindex(h.shape):
            writer.writerow([uid, b, m, repr(float(h[b, m].real)), repr(float(h[b, m].imag))])
