"""Run one experiment and write ``results.json`` plus CSV tables.

Outputs depend only on the configuration: keys are sorted, floats are
written with full precision and nothing time-dependent is recorded.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path

import numpy as np

from ..errors import GuardExceeded
from .config import ExperimentConfig, build_config, read_config
from .experiments import CATALOG, Outcome, defaults_for

log = logging.getLogger(__name__)

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_GUARD = 0, 1, 2, 3
RESULT_KEYS = ("experiment", "claim", "config", "config_hash", "seed", "passed", "criteria", "statistics", "reports", "censored", "tables")


def _clean(obj):
    """Plain JSON values; non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return v


def load(source, seed: int | None = None, out: str | None = None) -> ExperimentConfig:
    raw = read_config(source)
    if seed is not None:
        raw["seed"] = seed
    if out is not None:
        raw["out"] = out
    return build_config(raw, defaults_for)


def check_censoring(cfg: ExperimentConfig, outcome: Outcome):
    """Treat a run as guard-exhausted when too many replicas were censored.

    ``Outcome.censor`` already raises during the run; this catches outcomes
    assembled by hand.
    """
    limit = cfg.param("max_censored_fraction", 0.5)
    for label, c in outcome.censored.items():
        if c["total"] and c["censored"] / c["total"] > limit:
            raise GuardExceeded(f"{label}: {c['censored']} of {c['total']} replicas hit the step guard")


def results_dict(cfg: ExperimentConfig, outcome: Outcome) -> dict:
    return _clean(
        {
            "experiment": cfg.experiment,
            "claim": CATALOG[cfg.experiment].claim,
            "config": {k: v for k, v in cfg.to_dict().items() if k != "out"},
            "config_hash": cfg.hash(),
            "seed": cfg.seed,
            "passed": all(c["passed"] for c in outcome.criteria),
            "criteria": outcome.criteria,
            "statistics": outcome.statistics,
            "reports": outcome.reports,
            "censored": outcome.censored,
            "tables": sorted(outcome.tables),
        }
    )


def write_outputs(cfg: ExperimentConfig, outcome: Outcome, results: dict) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "results.json", "w") as fh:
        json.dump(results, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")
    for name, (header, rows) in sorted(outcome.tables.items()):
        with open(out / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v) for v in row])
    return out


def execute(cfg: ExperimentConfig) -> tuple[int, dict]:
    """Run, write outputs and return ``(exit code, results)``."""
    exp = CATALOG[cfg.experiment]
    log.info("running %s (seed %d)", cfg.experiment, cfg.seed)
    outcome = exp.run(cfg)
    check_censoring(cfg, outcome)
    results = results_dict(cfg, outcome)
    write_outputs(cfg, outcome, results)
    return (EXIT_PASS if results["passed"] else EXIT_FAIL), results


def run(source, seed: int | None = None, out: str | None = None) -> tuple[int, dict]:
    return execute(load(source, seed, out))
