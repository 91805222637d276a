"""Named experiment sweeps, run at desk scale unless paper scale is requested."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

DESK_SCALE = {"M": 100, "n_blocks": 1000}
PAPER_SCALE = {"M": 500, "n_blocks": 10_000}

B_SWEEP = (1, 2, 5, 10, 25, 50, 100)
CONVERGENCE_M_B = (10, 100, 1000)


@dataclass(frozen=True)
class ExperimentPreset:
    """A sweep grid of config overrides plus the modes, channels and seeds to run.

    ``base`` overrides apply to every grid point before the point's own
    overrides; the scale overrides (desk or paper) apply before ``base``.
    """

    name: str
    grid: tuple[dict, ...]
    modes: tuple[str, ...] = ("sucre_xl", "baseline")
    channels: tuple[str, ...] = ("iid",)
    seeds: tuple[int, ...] = (1,)
    base: dict = field(default_factory=dict)
    paper_scale: bool = False

    def __post_init__(self):
        if not self.grid or not self.modes or not self.channels or not self.seeds:
            raise ValueError(f"preset {self.name!r}: grid, modes, channels and seeds must be non-empty")

    @property
    def scale(self) -> dict:
        return dict(PAPER_SCALE if self.paper_scale else DESK_SCALE)

    @property
    def sweep_param(self) -> str:
        return ";".join(self.grid[0])


def _product(**axes) -> tuple[dict, ...]:
    keys = list(axes)
    return tuple(dict(zip(keys, vals)) for vals in itertools.product(*axes.values()))


def _dedupe(points) -> tuple[dict, ...]:
    seen, out = set(), []
    for p in points:
        key = tuple(sorted(p.items()))
        if key not in seen:
            seen.add(key)
            out.append(p)
    return tuple(out)


PRESETS: dict[str, ExperimentPreset] = {
    "fig3a_prc_nmse_vs_B": ExperimentPreset(
        "fig3a_prc_nmse_vs_B",
        grid=_product(B=B_SWEEP),
        channels=("iid", "correlated"),
        base={"vr_mode": "full"},
    ),
    "fig3b_prc_vs_Pb": ExperimentPreset(
        "fig3b_prc_vs_Pb",
        grid=_product(B=(1, 5, 20), P_b=(0.1, 0.2, 0.4, 0.6, 0.8, 1.0)),
    ),
    "fig4_attempts_vs_K": ExperimentPreset(
        "fig4_attempts_vs_K",
        grid=_product(K=(500, 1000, 2000), B=(1, 5, 20)),
        base={"P_b": 0.5},
    ),
    "fig5_accepted_vs_B_and_K": ExperimentPreset(
        "fig5_accepted_vs_B_and_K",
        grid=_dedupe(
            _product(K=(1000,), B=(1, 2, 5, 10, 20, 25, 50))
            + _product(K=(500, 1000, 2000), B=(1, 5, 20))
        ),
        base={"P_b": 0.5},
    ),
    "appendix_convergence": ExperimentPreset(
        "appendix_convergence",
        grid=_product(M_b=CONVERGENCE_M_B),
        modes=("sucre_xl",),
    ),
}


def get_preset(name: str, **changes) -> ExperimentPreset:
    try:
        preset = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return replace(preset, **changes) if changes else preset
