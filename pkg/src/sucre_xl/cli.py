"""Command-line entry point: configuration parsing, preset sweeps, result files.

Configuration documents are flat JSON objects. Scenario keys are the fields
of :class:`ScenarioConfig`; the extra keys ``preset``, ``seeds``, ``modes``,
``channels`` and ``paper_scale`` select and adjust an experiment preset.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import __version__
from .config import ConfigError, ScenarioConfig
from .engine import run_campaign
from .metrics import mean_ci, summarize
from .presets import ExperimentPreset, get_preset
from .protocol import MODES, verify_sum_gain_convergence

log = logging.getLogger(__name__)

PRESET_KEYS = ("preset", "seeds", "modes", "channels", "paper_scale")
METRIC_COLUMNS = (
    "prc", "prc_overlap", "nmse", "nmse_rel", "avg_attempts", "failed_fraction", "xi", "lambda",
)
CONVERGENCE_BETAS = ((1e-10, 4e-11, 0.0, 2e-11), (3e-11, 0.0, 6e-11, 1e-11))
CONVERGENCE_TRIALS = 1000


def parse_config(document: Mapping[str, Any]) -> tuple[ScenarioConfig, ExperimentPreset | None]:
    """Split a flat document into a validated scenario config and optional preset.

    Precedence, lowest first: built-in defaults, the preset's scale (desk or
    paper) and base overrides, then the document's own scenario keys.
    """
    doc = dict(document)
    preset = None
    if "preset" in doc:
        name = doc.pop("preset")
        if not isinstance(name, str):
            raise ConfigError(f"preset expects a string, got {name!r}")
        changes = {}
        for key in ("seeds", "modes", "channels"):
            if key in doc:
                value = doc.pop(key)
                if not isinstance(value, list) or not value:
                    raise ConfigError(f"{key} expects a non-empty list, got {value!r}")
                changes[key] = tuple(value)
        if "paper_scale" in doc:
            flag = doc.pop("paper_scale")
            if not isinstance(flag, bool):
                raise ConfigError(f"paper_scale expects a boolean, got {flag!r}")
            changes["paper_scale"] = flag
        try:
            preset = get_preset(name, **changes)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for m in preset.modes:
            if m not in MODES:
                raise ConfigError(f"modes: unknown mode {m!r}")
        for c in preset.channels:
            if c not in ("iid", "correlated"):
                raise ConfigError(f"channels: unknown channel model {c!r}")
        for s in preset.seeds:
            if isinstance(s, bool) or not isinstance(s, int) or s < 0:
                raise ConfigError(f"seeds: expected non-negative integers, got {s!r}")
        merged = {**preset.scale, **preset.base, **doc}
    else:
        for key in PRESET_KEYS:
            if key in doc:
                raise ConfigError(f"{key!r} is only valid together with 'preset'")
        merged = doc
    return ScenarioConfig.from_dict(merged), preset


def document_for(config: ScenarioConfig, preset: ExperimentPreset | None) -> dict:
    """Flat document that :func:`parse_config` maps back to ``config`` and ``preset``."""
    doc = config.to_dict()
    if preset is not None:
        doc.update(
            preset=preset.name,
            seeds=list(preset.seeds),
            modes=list(preset.modes),
            channels=list(preset.channels),
            paper_scale=preset.paper_scale,
        )
    return doc


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _point_label(point: Mapping[str, Any]) -> str:
    return ";".join(_fmt(v) for v in point.values())


def _campaign_task(args):
    config, mode, seed, trace_dir, stem = args
    if trace_dir is None:
        res = run_campaign(config, mode, seed)
    else:
        trace_dir = Path(trace_dir)
        with open(trace_dir / f"{stem}.jsonl", "w") as tr, open(trace_dir / f"{stem}_blocks.csv", "w", newline="") as bc:
            res = run_campaign(config, mode, seed, trace=tr, block_csv=bc)
        (trace_dir / f"{stem}.json").write_text(res.to_json())
    return res.metrics, res.totals()


def _write_csv(path: Path, header, rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _run_convergence(preset: ExperimentPreset, config: ScenarioConfig, out: Path) -> list[str]:
    rows = []
    grid = [p["M_b"] for p in preset.grid]
    cfg = config.replace(tau_p=1)
    for seed in preset.seeds:
        rng = np.random.default_rng(seed)
        errs = verify_sum_gain_convergence(np.array(CONVERGENCE_BETAS), grid, cfg, rng, CONVERGENCE_TRIALS)
        for M_b in grid:
            rows.append(["M_b", M_b, seed, CONVERGENCE_TRIALS, _fmt(errs[M_b])])
    name = f"{preset.name}.csv"
    _write_csv(out / name, ["sweep_param", "M_b", "seed", "trials", "mean_rel_error"], rows)
    return [name]


def run_experiment(
    preset: ExperimentPreset,
    config: ScenarioConfig,
    output_dir: str | Path,
    workers: int = 1,
    trace: bool = False,
) -> int:
    """Run every (grid point, channel, mode, seed) campaign and write CSVs plus a manifest."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()

    if preset.name == "appendix_convergence":
        files = _run_convergence(preset, config, out)
    else:
        trace_dir = None
        if trace:
            trace_dir = out / "traces"
            trace_dir.mkdir(exist_ok=True)
        tasks, keys = [], []
        for i, point in enumerate(preset.grid):
            for channel in preset.channels:
                cfg = config.replace(channel=channel, **point)
                for mode in preset.modes:
                    for seed in preset.seeds:
                        stem = f"{preset.name}_p{i:02d}_{channel}_{mode}_s{seed}"
                        tasks.append((cfg, mode, seed, None if trace_dir is None else str(trace_dir), stem))
                        keys.append((i, point, channel, mode, seed, cfg))
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_campaign_task, tasks))
        else:
            results = [_campaign_task(t) for t in tasks]

        run_rows, groups = [], {}
        for (i, point, channel, mode, seed, cfg), (acc, totals) in zip(keys, results):
            metrics = summarize(acc, cfg.K, cfg.P_a)
            run_rows.append(
                [preset.sweep_param, _point_label(point), mode, channel, seed]
                + [_fmt(metrics[c]) for c in METRIC_COLUMNS]
                + [acc.collision_count, totals["admitted"], totals["failed"]]
            )
            groups.setdefault((i, channel, mode), []).append((seed, acc, cfg, point))

        summary_rows = []
        for (i, channel, mode), shard in groups.items():
            cfg, point = shard[0][2], shard[0][3]
            per_seed = [summarize(acc, cfg.K, cfg.P_a) for _, acc, _, _ in shard]
            pooled = shard[0][1]
            for _, acc, _, _ in shard[1:]:
                pooled = pooled + acc
            pooled_metrics = summarize(pooled, cfg.K, cfg.P_a)
            row = [preset.sweep_param, _point_label(point), mode, channel, ";".join(str(s) for s, *_ in shard)]
            for c in METRIC_COLUMNS:
                _, half = mean_ci(m[c] for m in per_seed)
                row += [_fmt(pooled_metrics[c]), _fmt(half)]
            summary_rows.append(row)

        head = ["sweep_param", "sweep_value", "mode", "channel_model", "seed"]
        _write_csv(
            out / f"{preset.name}_runs.csv",
            head + list(METRIC_COLUMNS) + ["collisions", "admitted", "failed"],
            run_rows,
        )
        sum_head = head[:-1] + ["seeds"]
        for c in METRIC_COLUMNS:
            sum_head += [c, f"{c}_ci_halfwidth"]
        _write_csv(out / f"{preset.name}_summary.csv", sum_head, summary_rows)
        files = [f"{preset.name}_runs.csv", f"{preset.name}_summary.csv"]

    manifest = {
        "preset": preset.name,
        "document": document_for(config, preset),
        "grid": list(preset.grid),
        "seeds": list(preset.seeds),
        "code_version": __version__,
        "wall_time_s": time.perf_counter() - start,
        "files": files,
    }
    (out / f"{preset.name}_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="sucre-xl",
        description="Monte Carlo simulator of SUCRe-XL random access in XL-MIMO arrays.",
    )
    ap.add_argument("--preset", help="experiment preset to run")
    ap.add_argument("--config", type=Path, help="flat JSON configuration document")
    ap.add_argument("--seed", type=int, action="append", help="campaign seed (repeatable)")
    ap.add_argument("--paper-scale", action="store_true", help="M=500 and 10^4 blocks per point")
    ap.add_argument("--trace", action="store_true", help="write JSON-lines traces and per-block CSVs")
    ap.add_argument("--out", type=Path, help="output directory (preset runs default to ./results)")
    ap.add_argument("--mode", choices=MODES, help="restrict to one protocol mode")
    ap.add_argument("--channel", choices=("iid", "correlated"), help="restrict to one channel model")
    ap.add_argument("--workers", type=int, default=1, help="parallel campaign workers")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")

    doc = {}
    if args.config is not None:
        try:
            doc = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
            return 2
        if not isinstance(doc, dict):
            print("error: config document must be a JSON object", file=sys.stderr)
            return 2
    if args.preset:
        doc["preset"] = args.preset
    if args.paper_scale and "preset" in doc:
        doc["paper_scale"] = True
    if args.seed and "preset" in doc:
        doc["seeds"] = args.seed
    try:
        config, preset = parse_config(doc)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if preset is None:
        if args.channel:
            config = config.replace(channel=args.channel)
        seed = args.seed[0] if args.seed else 1
        res = run_campaign(config, args.mode or "sucre_xl", seed)
        text = res.to_json()
        if args.out is not None:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / "campaign.json").write_text(text)
        print(text)
        return 0

    if args.mode:
        preset = replace(preset, modes=(args.mode,))
    if args.channel:
        preset = replace(preset, channels=(args.channel,))
    out = args.out or Path("results")
    log.info("running %s into %s", preset.name, out)
    return run_experiment(preset, config, out, workers=args.workers, trace=args.trace)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
