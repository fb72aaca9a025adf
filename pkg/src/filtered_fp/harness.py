"""Seeded experiment sweeps over observation noise, with CSV and JSON outputs.

A sweep runs every (algorithm, eps, seed) cell of a grid, records one row per
run and aggregates per (algorithm, eps) with two-standard-error bounds.  Rows
depend only on their own seed, so the worker count never changes the output.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .environments import (anticoordination_game, box_pushing, load_box_config, toy_posg,
                           uav_game)
from .games import NormalFormGame, load_game
from .learning import IDENTITY, FilterSpec, StepSchedule, run_fp_batch
from .lffp import LFFPConfig, run_lffp
from .posg import POSG, load_posg

log = logging.getLogger(__name__)

MATRIX_ALGOS = ("gwfp", "ffp")
POSG_ALGOS = ("lffp", "lgwfp")
ROW_FIELDS = ("algo", "eps", "seed", "converged", "converged_to", "mean_episode_reward",
              "iterations")
AGGREGATE_FIELDS = ("algo", "eps", "metric", "value", "two_se", "n")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a sweep needs; loadable from a YAML or JSON mapping.

    ``game`` names a normal-form game (``uav``, ``uav-printed``,
    ``anticoordination:<collision>`` or a JSON file) and ``env`` a POSG
    (``box``, ``toy`` or a JSON file).  ``assumed_eps`` of ``None`` lets the
    Bayes filter use the true noise level of each cell.
    """

    kind: str = "matrix-sweep"
    game: str = "uav"
    env: str = "box"
    env_config: Optional[str] = None
    algorithms: tuple = MATRIX_ALGOS
    eps_grid: tuple = tuple(round(0.05 * k, 2) for k in range(11))
    seeds: int = 100
    base_seed: int = 0
    iterations: int = 10_000
    schedule: str = "0,1"
    assumed_eps: Optional[float] = None
    steps: int = 20_000
    horizon: int = 100
    depth: int = 4
    xi0: float = 1.0
    clock: str = "state"
    state_mode: str = "distribution"
    out: str = "out"

    def __post_init__(self):
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        object.__setattr__(self, "eps_grid", tuple(float(e) for e in self.eps_grid))
        if self.kind not in ("matrix-sweep", "posg-sweep"):
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        allowed = MATRIX_ALGOS if self.kind == "matrix-sweep" else POSG_ALGOS
        if not self.algorithms or any(a not in allowed for a in self.algorithms):
            raise ValueError(f"algorithms must be a nonempty subset of {allowed}")
        if not self.eps_grid or any(not 0 <= e <= 1 for e in self.eps_grid):
            raise ValueError("eps grid must be nonempty with entries in [0, 1]")
        if self.seeds < 1:
            raise ValueError("need at least one seed")
        if self.assumed_eps is not None and not 0 <= self.assumed_eps <= 1:
            raise ValueError("assumed_eps must lie in [0, 1]")
        StepSchedule.parse(self.schedule)

    @classmethod
    def posg_defaults(cls, **overrides) -> "ExperimentConfig":
        """Desk-scale box pushing: 2e4 steps, 20 seeds, eps 0 to 0.3.

        Optimism starts at ``xi0 = 3``: with ``xi0 = 1`` some seeds settle on
        the small boxes before ever trying the joint push at ``eps = 0``.
        """
        base = dict(kind="posg-sweep", algorithms=POSG_ALGOS, eps_grid=(0.0, 0.1, 0.2, 0.3),
                    seeds=20, xi0=3.0)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if doc.get("kind") == "posg-sweep":
            return cls.posg_defaults(**doc)
        return cls(**doc)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["algorithms"] = list(self.algorithms)
        out["eps_grid"] = list(self.eps_grid)
        return out

    def seed_list(self) -> list[int]:
        return [self.base_seed + k for k in range(self.seeds)]


def load_config(path) -> ExperimentConfig:
    import yaml
    return ExperimentConfig.from_dict(yaml.safe_load(Path(path).read_text()) or {})


@dataclass
class ResultRow:
    algo: str
    eps: float
    seed: int
    converged: Optional[int] = None
    converged_to: str = ""
    mean_episode_reward: Optional[float] = None
    iterations: int = 0
    wall_time: float = 0.0

    def csv_values(self) -> list:
        return [self.algo, repr(self.eps), self.seed,
                "" if self.converged is None else self.converged,
                self.converged_to,
                "" if self.mean_episode_reward is None else repr(self.mean_episode_reward),
                self.iterations]


@dataclass
class SweepResult:
    config: ExperimentConfig
    rows: list
    aggregate: list = field(default_factory=list)


def resolve_game(ref: str) -> NormalFormGame:
    if ref == "uav":
        return uav_game()
    if ref == "uav-printed":
        return uav_game(printed_table=True)
    if ref.startswith("anticoordination:"):
        return anticoordination_game(float(ref.split(":", 1)[1]))
    return load_game(ref)


def resolve_env(ref: str, env_config: Optional[str] = None) -> POSG:
    if ref == "box":
        return box_pushing(load_box_config(env_config) if env_config else None)
    if ref == "toy":
        return toy_posg()
    return load_posg(ref)


def fp_filter(algo: str, eps: float, assumed_eps: Optional[float]) -> FilterSpec:
    if algo in ("gwfp", "lgwfp"):
        return IDENTITY
    return FilterSpec("bayes", eps if assumed_eps is None else assumed_eps)


def lffp_config(cfg: ExperimentConfig, algo: str, eps: float) -> LFFPConfig:
    return LFFPConfig(depth=cfg.depth, xi0=cfg.xi0, filter=fp_filter(algo, eps, cfg.assumed_eps),
                      schedule=StepSchedule.parse(cfg.schedule), state_mode=cfg.state_mode,
                      clock=cfg.clock)


def _matrix_cell(args) -> list[ResultRow]:
    cfg, algo, eps = args
    game = resolve_game(cfg.game)
    seeds = cfg.seed_list()
    start = time.perf_counter()
    try:
        traces = run_fp_batch(game, eps, fp_filter(algo, eps, cfg.assumed_eps),
                              StepSchedule.parse(cfg.schedule), cfg.iterations, seeds)
    except Exception as exc:  # recorded per row, never aborts the sweep
        log.warning("matrix cell %s eps=%s failed: %s", algo, eps, exc)
        return [ResultRow(algo, eps, s, 0, f"error:{type(exc).__name__}",
                          iterations=cfg.iterations) for s in seeds]
    per_run = (time.perf_counter() - start) / len(seeds)
    return [ResultRow(algo, eps, tr.seed, int(tr.verdict.converged), tr.verdict.label(game),
                      iterations=tr.iterations, wall_time=per_run) for tr in traces]


def _posg_cell(args) -> list[ResultRow]:
    cfg, algo, eps, seed = args
    start = time.perf_counter()
    try:
        posg = resolve_env(cfg.env, cfg.env_config)
        trace = run_lffp(posg, eps, lffp_config(cfg, algo, eps), cfg.steps, cfg.horizon, seed)
        reward = trace.final_quartile_mean()
        label = ""
    except Exception as exc:
        log.warning("posg run %s eps=%s seed=%s failed: %s", algo, eps, seed, exc)
        reward, label = None, f"error:{type(exc).__name__}"
    return [ResultRow(algo, eps, seed, None, label, reward, cfg.steps,
                      time.perf_counter() - start)]


def _run_tasks(fn, tasks: Sequence, workers: int) -> list[ResultRow]:
    if workers <= 1:
        chunks = [fn(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(fn, tasks))
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: (r.algo, r.eps, r.seed))
    return rows


def two_se(values: Sequence[float]) -> float:
    """Two standard errors of the mean, ``2 * sd / sqrt(n)`` with sample sd."""
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return 0.0
    return float(2 * values.std(ddof=1) / math.sqrt(len(values)))


def aggregate(rows: Sequence[ResultRow]) -> list[dict]:
    """Per (algo, eps): percent converged for matrix runs, final-quartile
    reward for POSG runs.  A pure function of the rows."""
    cells: dict = {}
    for r in rows:
        cells.setdefault((r.algo, r.eps), []).append(r)
    out = []
    for (algo, eps), group in sorted(cells.items()):
        if group[0].mean_episode_reward is None and group[0].converged is not None:
            vals = [100.0 * r.converged for r in group]
            metric = "pct_converged"
        else:
            vals = [r.mean_episode_reward for r in group if r.mean_episode_reward is not None]
            metric = "final_quartile_reward"
        if not vals:
            continue
        out.append({"algo": algo, "eps": eps, "metric": metric,
                    "value": float(np.mean(vals)), "two_se": two_se(vals), "n": len(vals)})
    return out


def sweep_matrix(cfg: ExperimentConfig, workers: int = 1) -> SweepResult:
    if cfg.kind != "matrix-sweep":
        raise ValueError("sweep_matrix needs a matrix-sweep config")
    tasks = [(cfg, a, e) for a in cfg.algorithms for e in cfg.eps_grid]
    rows = _run_tasks(_matrix_cell, tasks, workers)
    return SweepResult(cfg, rows, aggregate(rows))


def sweep_posg(cfg: ExperimentConfig, workers: int = 1) -> SweepResult:
    if cfg.kind != "posg-sweep":
        raise ValueError("sweep_posg needs a posg-sweep config")
    tasks = [(cfg, a, e, s) for a in cfg.algorithms for e in cfg.eps_grid
             for s in cfg.seed_list()]
    rows = _run_tasks(_posg_cell, tasks, workers)
    return SweepResult(cfg, rows, aggregate(rows))


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def emit_outputs(result: SweepResult, path) -> dict:
    """Write rows.csv, aggregate.csv, timings.csv and manifest.json under ``path``.

    Wall-clock times go to timings.csv so that rows.csv stays byte-identical
    across repeated runs.  Returns the written file paths by name.
    """
    if not result.rows:
        raise ValueError("nothing to write: the sweep produced no rows")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write-test"
    probe.write_text("")
    probe.unlink()

    files = {name: out / name for name in
             ("rows.csv", "aggregate.csv", "timings.csv", "manifest.json")}
    with open(files["rows.csv"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ROW_FIELDS)
        for r in result.rows:
            w.writerow(r.csv_values())
    with open(files["aggregate.csv"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_FIELDS)
        for a in result.aggregate:
            w.writerow([_fmt(a[k]) for k in AGGREGATE_FIELDS])
    with open(files["timings.csv"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("algo", "eps", "seed", "wall_time"))
        for r in result.rows:
            w.writerow([r.algo, repr(r.eps), r.seed, f"{r.wall_time:.6f}"])
    manifest = {
        "version": __version__,
        "base_seed": result.config.base_seed,
        "config": result.config.to_dict(),
        "rows": len(result.rows),
        "notes": {
            "pbpg": "policy-based belief planning is a reference point only and "
                    "is not reimplemented; no rows are produced for it",
            "timings": "per-run wall time lives in timings.csv, not rows.csv",
        },
    }
    files["manifest.json"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                      encoding="utf-8")
    return files


def read_rows(path) -> list[ResultRow]:
    """Parse a rows.csv written by :func:`emit_outputs`."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.append(ResultRow(
                algo=rec["algo"], eps=float(rec["eps"]), seed=int(rec["seed"]),
                converged=int(rec["converged"]) if rec["converged"] else None,
                converged_to=rec["converged_to"],
                mean_episode_reward=(float(rec["mean_episode_reward"])
                                     if rec["mean_episode_reward"] else None),
                iterations=int(rec["iterations"])))
    return rows


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
