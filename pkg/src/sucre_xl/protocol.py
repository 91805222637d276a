"""SUCRe-XL contention resolution for one random-access block.

Step 1: contenders send RA pilots, each subarray despreads its received block.
Step 2: the BS answers with a precoded DL pilot. The XL variant precodes with
the sum of despread vectors over all subarrays; the naive variant precodes
each subarray with its own despread vector.
Step 3: every contender estimates the total gain on its pilot from the real
part of its DL observation and repeats only if it looks like the strongest.
Step 4: decoding is idealised: repeaters are admitted when they are the only
one, or when their visibility regions are pairwise disjoint.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.special import gammaln

from .channel import CorrelationSpec, sample_channel, standard_cn
from .config import ScenarioConfig
from .geometry import UserRecord, vrs_pairwise_disjoint

MODES = ("sucre_xl", "naive", "baseline")


class Verdict(str, enum.Enum):
    REPEAT = "repeat"
    INACTIVE = "inactive"


class ContentionCase(str, enum.Enum):
    NONOVERLAP_MULTI = "i_nonoverlap_multi"
    SINGLE_WINNER = "ii_single_winner"
    NONE = "iii_none"
    OVERLAP_COLLISION = "iv_overlap_collision"


def pilot_book(tau_p: int) -> np.ndarray:
    """Unnormalised DFT pilots: row ``t`` is ``s_t`` with ``||s_t||^2 = tau_p``."""
    n = np.arange(tau_p)
    return np.exp(-2j * np.pi * np.outer(n, n) / tau_p)


@dataclass
class UplinkObservation:
    Y: np.ndarray  # (B, M_b, tau_p) received blocks
    y: np.ndarray  # (B, M_b, tau_p) despread, column t is y_t^(b)
    y_sum: np.ndarray  # (M_b, tau_p) sum over subarrays
    alpha_true: np.ndarray  # (tau_p,)


@dataclass
class UEDecision:
    user_id: int
    pilot: int
    z: complex
    alpha_hat: float
    epsilon: float
    verdict: Verdict


@dataclass
class ContentionOutcome:
    pilot: int
    contenders: tuple[int, ...]
    repeaters: tuple[int, ...]
    case: ContentionCase
    admitted: tuple[int, ...]
    alpha_true: float = math.nan
    contenders_overlap: bool = False
    decisions: list[UEDecision] = field(default_factory=list)

    def to_trace(self, block: int) -> dict:
        return {
            "block": block,
            "pilot": self.pilot,
            "contenders": list(self.contenders),
            "alpha_true": self.alpha_true,
            "alpha_hat": {str(d.user_id): d.alpha_hat for d in self.decisions},
            "verdicts": {str(d.user_id): d.verdict.value for d in self.decisions},
            "case": self.case.value,
            "admitted": list(self.admitted),
        }


# ---------------------------------------------------------------- step 1


def superimpose_uplink(
    transmitters: Sequence[tuple[UserRecord, int]],
    channels: Mapping[int, np.ndarray],
    pilots: np.ndarray,
    config: ScenarioConfig,
    rng: np.random.Generator | None = None,
    noise: bool = True,
) -> UplinkObservation:
    tau = config.tau_p
    if pilots.shape != (tau, tau):
        raise ValueError(f"pilot book shape {pilots.shape} does not match tau_p={tau}")
    B, M_b = config.B, config.M_b
    if noise:
        Y = np.sqrt(config.sigma2) * standard_cn(rng, (B, M_b, tau))
    else:
        Y = np.zeros((B, M_b, tau), dtype=complex)
    alpha = np.zeros(tau)
    for user, t in transmitters:
        if config.rho <= 0:
            raise ValueError("transmitters must have positive uplink power")
        h = channels[user.id]
        Y += np.sqrt(config.rho) * h[:, :, None] * pilots[t][None, None, :]
        alpha[t] += config.rho * tau * user.total_gain
    y = Y @ pilots.conj().T / np.sqrt(tau)
    return UplinkObservation(Y, y, y.sum(axis=0), alpha)


def verify_sum_gain_convergence(
    betas: np.ndarray,
    M_b_grid: Iterable[int],
    config: ScenarioConfig,
    rng: np.random.Generator,
    trials: int = 1000,
    noise: bool = True,
    channel_sampler: Callable | None = None,
) -> dict[int, float]:
    """Mean relative error of ``||sum_b y_t^(b)||^2 / M_b`` against ``alpha_t + B*sigma2``.

    Parameters
    ----------
    betas : (n_users, B) array
        Large-scale gains of the users sharing pilot 0; zero marks an
        invisible subarray.
    M_b_grid : iterable of int
        Antennas per subarray to sweep.
    channel_sampler : callable, optional
        ``(user, config, rng) -> (B, M_b) array``; defaults to i.i.d. Rayleigh.
    """
    betas = np.atleast_2d(np.asarray(betas, dtype=float))
    n_users, B = betas.shape
    out = {}
    for M_b in M_b_grid:
        cfg = config.replace(M=B * M_b, B=B)
        pilots = pilot_book(cfg.tau_p)
        users = [
            UserRecord(i, np.zeros(2), 0.0, betas[i].copy(), betas[i] > 0, np.zeros(B))
            for i in range(n_users)
        ]
        tx = [(u, 0) for u in users]
        sampler = channel_sampler or (lambda u, c, g: sample_channel(u, CorrelationSpec(), c, g))
        target = None
        errs = np.empty(trials)
        for n in range(trials):
            chans = {u.id: sampler(u, cfg, rng) for u in users}
            obs = superimpose_uplink(tx, chans, pilots, cfg, rng, noise=noise)
            if target is None:
                target = obs.alpha_true[0] + B * (cfg.sigma2 if noise else 0.0)
            power = np.vdot(obs.y_sum[:, 0], obs.y_sum[:, 0]).real / M_b
            errs[n] = abs(power - target) / target
        out[int(M_b)] = float(errs.mean())
    return out


# ---------------------------------------------------------------- step 2


def _unit_conj_columns(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=-2, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        u = np.where(norms > 0, vectors.conj() / norms, 0.0)
    return u


def precode_xl(obs: UplinkObservation, pilots: np.ndarray, config: ScenarioConfig) -> np.ndarray:
    """Common DL precoder ``(M_b, tau_p)`` broadcast by every subarray."""
    return np.sqrt(config.q / config.B) * _unit_conj_columns(obs.y_sum) @ pilots.conj()


def precode_per_sa(obs: UplinkObservation, pilots: np.ndarray, config: ScenarioConfig) -> np.ndarray:
    """Per-subarray precoders ``(B, M_b, tau_p)`` of the naive SUCRe adaptation."""
    return np.sqrt(config.q / config.B) * _unit_conj_columns(obs.y) @ pilots.conj()


def ue_observe(
    user: UserRecord,
    pilot: int,
    precoders: np.ndarray,
    h: np.ndarray,
    pilots: np.ndarray,
    config: ScenarioConfig,
    rng: np.random.Generator | None = None,
    noise: bool = True,
) -> complex:
    """DL observation of ``user`` after despreading with its own pilot.

    ``precoders`` is either the common ``(M_b, tau_p)`` XL precoder or the
    stacked ``(B, M_b, tau_p)`` naive precoders. Rows of ``h`` outside the
    user's VR are zero, so summing over all subarrays equals summing over V_k.
    """
    s = pilots[pilot] / np.sqrt(config.tau_p)
    if precoders.ndim == 2:
        received = h.sum(axis=0) @ precoders
    else:
        received = np.einsum("bm,bmt->t", h, precoders)
    z = complex(received @ s)
    if noise:
        z += complex(np.sqrt(config.sigma2) * standard_cn(rng, ()))
    return z


# ---------------------------------------------------------------- step 3


def gamma_factor(M_b: int) -> float:
    """``(Gamma(M_b + 1/2) / Gamma(M_b))^2`` evaluated in the log domain."""
    return math.exp(2.0 * (gammaln(M_b + 0.5) - gammaln(M_b)))


def own_gain(user: UserRecord, config: ScenarioConfig) -> float:
    return config.rho * config.tau_p * user.total_gain


def estimate_alpha(z: complex, user: UserRecord, config: ScenarioConfig) -> float:
    gamma_k = own_gain(user, config)
    re2 = complex(z).real ** 2
    if re2 == 0.0:  # includes underflow of tiny real parts
        return math.inf
    S = user.total_gain
    est = (
        gamma_factor(config.M_b) * config.rho * config.q * config.tau_p**2 * S**2 / (config.B * re2)
        - config.B * config.sigma2
    )
    return max(gamma_k, est)


def bias_term(user: UserRecord, config: ScenarioConfig) -> float:
    return config.delta / math.sqrt(config.M_b) * user.total_gain


def decide(user: UserRecord, alpha_hat: float, epsilon: float, config: ScenarioConfig) -> Verdict:
    if own_gain(user, config) > alpha_hat / 2.0 + epsilon:
        return Verdict.REPEAT
    return Verdict.INACTIVE


# ---------------------------------------------------------------- step 4


def classify_contention(
    pilot: int,
    contenders: Sequence[int],
    repeaters: Sequence[int],
    vrs: Mapping[int, np.ndarray],
    admit_disjoint_subset: bool = False,
) -> ContentionOutcome:
    """Sort a pilot's contention into one of the four cases.

    With ``admit_disjoint_subset`` a case-iv pilot still admits those
    repeaters whose VR overlaps no other repeater.
    """
    contenders = tuple(contenders)
    repeaters = tuple(repeaters)
    if not set(repeaters) <= set(contenders):
        raise ValueError("repeaters must be a subset of contenders")
    overlap = not vrs_pairwise_disjoint(vrs[k] for k in contenders)
    if len(repeaters) == 0:
        case, admitted = ContentionCase.NONE, ()
    elif len(repeaters) == 1:
        case, admitted = ContentionCase.SINGLE_WINNER, repeaters
    elif vrs_pairwise_disjoint(vrs[k] for k in repeaters):
        case, admitted = ContentionCase.NONOVERLAP_MULTI, repeaters
    else:
        case, admitted = ContentionCase.OVERLAP_COLLISION, ()
        if admit_disjoint_subset:
            load = np.sum([vrs[k] for k in repeaters], axis=0)
            admitted = tuple(k for k in repeaters if load[vrs[k]].max() == 1)
    return ContentionOutcome(pilot, contenders, repeaters, case, admitted, contenders_overlap=overlap)


def baseline_decide(
    pilot: int, contenders: Sequence[int], vrs: Mapping[int, np.ndarray]
) -> ContentionOutcome:
    """ALOHA-like reference: everybody repeats, success only without VR overlap."""
    return classify_contention(pilot, contenders, contenders, vrs)


# ---------------------------------------------------------------- one block


def resolve_block(
    transmitters: Sequence[tuple[UserRecord, int]],
    channels: Mapping[int, np.ndarray] | None,
    config: ScenarioConfig,
    mode: str,
    rng: np.random.Generator | None,
    pilots: np.ndarray | None = None,
) -> list[ContentionOutcome]:
    """Run steps 1-4 for every occupied pilot of one RA block."""
    if mode not in MODES:
        raise ValueError(f"unknown protocol mode {mode!r}")
    by_pilot: dict[int, list[UserRecord]] = {}
    for user, t in transmitters:
        by_pilot.setdefault(t, []).append(user)
    vrs = {u.id: u.vr for u, _ in transmitters}

    if mode == "baseline":
        return [
            baseline_decide(t, [u.id for u in group], vrs) for t, group in sorted(by_pilot.items())
        ]

    if pilots is None:
        pilots = pilot_book(config.tau_p)
    obs = superimpose_uplink(transmitters, channels, pilots, config, rng)
    if mode == "sucre_xl":
        V = precode_xl(obs, pilots, config)
    else:
        V = precode_per_sa(obs, pilots, config)

    outcomes = []
    for t, group in sorted(by_pilot.items()):
        decisions = []
        for user in group:
            z = ue_observe(user, t, V, channels[user.id], pilots, config, rng)
            alpha_hat = estimate_alpha(z, user, config)
            eps = bias_term(user, config)
            decisions.append(
                UEDecision(user.id, t, z, alpha_hat, eps, decide(user, alpha_hat, eps, config))
            )
        repeaters = [d.user_id for d in decisions if d.verdict is Verdict.REPEAT]
        outcome = classify_contention(
            t, [u.id for u in group], repeaters, vrs, config.admit_disjoint_subset
        )
        outcome.alpha_true = float(obs.alpha_true[t])
        outcome.decisions = decisions
        outcomes.append(outcome)
    return outcomes
