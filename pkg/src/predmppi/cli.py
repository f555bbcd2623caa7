"""Command-line harness: single runs, seeded lambda sweeps, scenario validation and plot-data export.

Exit codes: 0 success, 1 invalid scenario or arguments, 2 at least one run failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from .metrics import METRIC_FIELDS, EpisodeMetrics, Summary, aggregate, episode_metrics
from .scenario import ConfigurationError, Scenario, load_scenario, read_scenario_text, validate
from .simulation import EpisodeLog, run_episode

log = logging.getLogger(__name__)

MAX_WORKERS_ENV = "PREDMPPI_MAX_WORKERS"

RESULT_COLUMNS = ("scenario", "lambda", "seed", "status", "pe", "acc", "ang", "dist", "ticks")
SHORT_NAMES = {
    "planning_effort": "pe",
    "mean_abs_accel": "acc",
    "mean_abs_angular": "ang",
    "distance_traveled": "dist",
    "ticks_to_done": "ticks",
}
AGGREGATE_COLUMNS = (
    ("scenario", "lambda", "n", "n_failed")
    + tuple(f"{SHORT_NAMES[m]}_{s}" for m in METRIC_FIELDS for s in ("mean", "std"))
    + ("dlk_pct", "col_pct")
)

EXIT_OK, EXIT_INVALID, EXIT_RUN_FAILED = 0, 1, 2


@dataclass(frozen=True)
class RunResult:
    scenario: str
    lam: float
    seed: int
    status: str
    metrics: EpisodeMetrics | None = None
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.metrics is not None


@dataclass
class BatchResult:
    runs: list[RunResult]
    summaries: dict[float, Summary] = field(default_factory=dict)

    @property
    def n_failed(self) -> int:
        return sum(not r.ok for r in self.runs)


# --------------------------------------------------------------------------- tick logs


@dataclass
class RecordedEpisode:
    """Plain-array view of an episode, shared by the JSONL log writer and the plot-data exporter."""

    scenario: str
    lam: float
    seed: int
    terminal: str
    collision_pair: tuple[str, str] | None
    agents: dict[str, dict[str, Any]]
    goal_names: tuple[str, ...]
    ticks: list[dict[str, Any]]
    final_states: dict[str, list[float]]

    @classmethod
    def from_log(cls, ep: EpisodeLog) -> "RecordedEpisode":
        agents = {
            aid: {"radius": float(a.radius), "goal": [float(v) for v in a.goal]} for aid, a in ep.final.agents.items()
        }
        ticks = []
        for rec in ep.ticks:
            ticks.append(
                {
                    "tick": rec.tick,
                    "states": {aid: _floats(a.state.as_array()) for aid, a in rec.snapshot.agents.items()},
                    "controls": {aid: _floats(u) for aid, u in rec.controls.items()},
                    "plans": {aid: [_floats(row) for row in p.states] for aid, p in rec.plans.items()},
                    "beliefs": {aid: b.as_dict() for aid, b in rec.beliefs.items()},
                }
            )
        return cls(
            scenario=ep.scenario,
            lam=ep.lam,
            seed=ep.seed,
            terminal=ep.terminal,
            collision_pair=ep.collision_pair,
            agents=agents,
            goal_names=tuple(ep.goal_names),
            ticks=ticks,
            final_states={aid: _floats(a.state.as_array()) for aid, a in ep.final.agents.items()},
        )

    def trajectory(self, agent_id: str) -> NDArray:
        """(T+1, 4) states: every tick snapshot plus the final state."""
        rows = [t["states"][agent_id] for t in self.ticks] + [self.final_states[agent_id]]
        return np.array(rows, dtype=float)


def _floats(values: Iterable[float]) -> list[float]:
    return [float(v) for v in values]


def write_tick_log(ep: EpisodeLog | RecordedEpisode, path: str | Path) -> Path:
    """One JSON object per line: a header, one record per tick, and a final record."""
    rec = ep if isinstance(ep, RecordedEpisode) else RecordedEpisode.from_log(ep)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        header = {
            "type": "episode",
            "scenario": rec.scenario,
            "lambda": rec.lam,
            "seed": rec.seed,
            "agents": rec.agents,
            "goal_names": list(rec.goal_names),
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for t in rec.ticks:
            fh.write(json.dumps({"type": "tick", **t}, sort_keys=True) + "\n")
        final = {
            "type": "final",
            "terminal": rec.terminal,
            "collision_pair": list(rec.collision_pair) if rec.collision_pair else None,
            "states": rec.final_states,
        }
        fh.write(json.dumps(final, sort_keys=True) + "\n")
    return path


def read_tick_log(path: str | Path) -> RecordedEpisode:
    header: dict[str, Any] | None = None
    final: dict[str, Any] | None = None
    ticks = []
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            obj = json.loads(line)
            kind = obj.pop("type", None)
            if kind == "episode":
                header = obj
            elif kind == "tick":
                ticks.append(obj)
            elif kind == "final":
                final = obj
            else:
                raise ValueError(f"{path}:{line_no}: unknown record type {kind!r}")
    if header is None or final is None:
        raise ValueError(f"{path}: missing episode header or final record")
    pair = final.get("collision_pair")
    return RecordedEpisode(
        scenario=header["scenario"],
        lam=float(header["lambda"]),
        seed=int(header["seed"]),
        terminal=final["terminal"],
        collision_pair=tuple(pair) if pair else None,
        agents=header["agents"],
        goal_names=tuple(header.get("goal_names", ())),
        ticks=ticks,
        final_states=final["states"],
    )


def emit_plot_data(ep: EpisodeLog | RecordedEpisode, out_dir: str | Path) -> list[Path]:
    """Write tab-separated trajectory, belief and plan files for external plotting.

    Files per agent ``<id>``:
      ``trajectory_<id>.tsv``  tick, x, y, theta, v (T+1 rows)
      ``plans_<id>.tsv``       tick, k, x, y (one row per planned state)
      ``beliefs_<id>.tsv``     tick, b_<goal>... (only when beliefs were tracked)
    Floats are written with ``repr`` so they parse back exactly.
    """
    rec = ep if isinstance(ep, RecordedEpisode) else RecordedEpisode.from_log(ep)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for aid in sorted(rec.agents):
        traj = rec.trajectory(aid)
        rows = [[i, *row] for i, row in enumerate(traj.tolist())]
        written.append(_write_tsv(out / f"trajectory_{aid}.tsv", ("tick", "x", "y", "theta", "v"), rows))
        plan_rows = [
            [t["tick"], k, s[0], s[1]] for t in rec.ticks if aid in t["plans"] for k, s in enumerate(t["plans"][aid])
        ]
        written.append(_write_tsv(out / f"plans_{aid}.tsv", ("tick", "k", "x", "y"), plan_rows))
        if rec.goal_names and any(aid in t["beliefs"] for t in rec.ticks):
            cols = ("tick",) + tuple(f"b_{g}" for g in rec.goal_names)
            belief_rows = [[t["tick"], *(t["beliefs"][aid][g] for g in rec.goal_names)] for t in rec.ticks]
            written.append(_write_tsv(out / f"beliefs_{aid}.tsv", cols, belief_rows))
    return written


def _write_tsv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    with path.open("w", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(repr(float(v)) if isinstance(v, float) else str(v) for v in row) + "\n")
    return path


def read_tsv(path: str | Path) -> tuple[list[str], NDArray]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split("\t")
    data = np.array([[float(v) for v in ln.split("\t")] for ln in lines[1:]], dtype=float)
    return header, data.reshape(len(lines) - 1, len(header))


# --------------------------------------------------------------------------- batches


def max_workers(requested: int) -> int:
    cap = os.environ.get(MAX_WORKERS_ENV)
    n = max(1, int(requested))
    if cap:
        n = min(n, max(1, int(cap)))
    return n


def _log_name(scenario: str, lam: float, seed: int) -> str:
    return f"{scenario}_lam{lam:g}_seed{seed}.jsonl"


def _run_one(task: tuple[Scenario, float, int, str | None]) -> RunResult:
    scenario, lam, seed, log_dir = task
    try:
        ep = run_episode(scenario, lam, seed)
        if log_dir is not None:
            write_tick_log(ep, Path(log_dir) / _log_name(scenario.name, lam, seed))
        return RunResult(scenario.name, lam, seed, ep.terminal, episode_metrics(ep))
    except Exception as exc:  # a failed run is recorded and the batch continues
        log.exception("run lambda=%s seed=%s failed", lam, seed)
        return RunResult(scenario.name, lam, seed, "error", None, f"{type(exc).__name__}: {exc}")


def run_batch(
    scenario: Scenario,
    lambdas: Sequence[float] | None = None,
    seeds: Sequence[int] | None = None,
    jobs: int = 1,
    log_dir: str | Path | None = None,
) -> BatchResult:
    """Every (lambda, seed) pair, sorted by lambda then seed whatever the completion order."""
    lams = tuple(float(v) for v in (scenario.lambdas if lambdas is None else lambdas))
    seed_list = tuple(int(s) for s in (scenario.seeds if seeds is None else seeds))
    errors = []
    if not lams:
        errors.append("lambda: empty lambda list")
    errors += [f"lambda: {v} is not a finite value >= 0" for v in lams if not (math.isfinite(v) and v >= 0.0)]
    if not seed_list:
        errors.append("seeds: empty seed list")
    if errors:
        raise ConfigurationError(errors)
    tasks = [(scenario, lam, seed, None if log_dir is None else str(log_dir)) for lam in lams for seed in seed_list]
    workers = max_workers(jobs)
    if workers == 1 or len(tasks) == 1:
        runs = [_run_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_one, tasks, chunksize=1))
    runs.sort(key=lambda r: (r.lam, r.seed))
    summaries = {}
    for lam in sorted(set(lams)):
        ok = [r.metrics for r in runs if r.lam == lam and r.metrics is not None]
        if ok:
            summaries[lam] = aggregate(ok)
    return BatchResult(runs, summaries)


def _fmt(v: float) -> str:
    return f"{v:.6f}"


def results_csv(batch: BatchResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in batch.runs:
        if r.metrics is None:
            w.writerow([r.scenario, f"{r.lam:g}", r.seed, r.status, "", "", "", "", ""])
            continue
        m = r.metrics
        w.writerow(
            [
                r.scenario,
                f"{r.lam:g}",
                r.seed,
                r.status,
                _fmt(m.planning_effort),
                _fmt(m.mean_abs_accel),
                _fmt(m.mean_abs_angular),
                _fmt(m.distance_traveled),
                m.ticks_to_done,
            ]
        )
    return buf.getvalue()


def aggregate_csv(batch: BatchResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGGREGATE_COLUMNS)
    name = batch.runs[0].scenario if batch.runs else ""
    for lam in sorted({r.lam for r in batch.runs}):
        failed = sum(1 for r in batch.runs if r.lam == lam and not r.ok)
        s = batch.summaries.get(lam)
        if s is None:
            w.writerow([name, f"{lam:g}", 0, failed] + [""] * (len(AGGREGATE_COLUMNS) - 4))
            continue
        stats = [_fmt(d[m]) for m in METRIC_FIELDS for d in (s.mean, s.std)]
        w.writerow([name, f"{lam:g}", s.n, failed, *stats, _fmt(s.dlk_pct), _fmt(s.col_pct)])
    return buf.getvalue()


# --------------------------------------------------------------------------- argument parsing


def parse_lambdas(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigurationError([f"lambda: cannot parse {text!r}"]) from exc


def parse_seeds(text: str) -> tuple[int, ...]:
    """Comma-separated non-negative seeds and inclusive ranges, e.g. ``1-5,9``."""
    out: list[int] = []
    for part in (p.strip() for p in text.split(",")):
        if not part:
            continue
        lo, _, hi = part.partition("-")
        try:
            out.extend(range(int(lo), int(hi) + 1) if hi else [int(lo)])
        except ValueError as exc:
            raise ConfigurationError([f"seeds: cannot parse {part!r} (seeds are non-negative integers)"]) from exc
    return tuple(out)


def _aggregate_path(out: Path) -> Path:
    return out.with_name(out.stem + "_aggregate.csv")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="predmppi", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a single episode")
    run.add_argument("--scenario", required=True, help="scenario file or bundled scenario name")
    run.add_argument("--lambda", dest="lam", type=float, default=None, help="predictability weight (default: first in file)")
    run.add_argument("--seeds", default=None, help="seed to run (default: first in file)")
    run.add_argument("--out", type=Path, default=None, help="CSV result file (default: stdout)")
    run.add_argument("--log-dir", type=Path, default=None, help="write the JSONL tick log here")

    sweep = sub.add_parser("sweep", help="run every lambda x seed pair")
    sweep.add_argument("--scenario", required=True)
    sweep.add_argument("--lambda", dest="lam", default=None, help="comma-separated lambdas (default: from file)")
    sweep.add_argument("--seeds", default=None, help="seeds, e.g. 1-50 (default: from file)")
    sweep.add_argument("--out", type=Path, default=None, help="per-run CSV; the aggregate goes to <stem>_aggregate.csv")
    sweep.add_argument("--jobs", type=int, default=1, help=f"worker processes (capped by ${MAX_WORKERS_ENV})")
    sweep.add_argument("--log-dir", type=Path, default=None, help="write one JSONL tick log per run here")

    val = sub.add_parser("validate", help="check a scenario file against the schema")
    val.add_argument("--scenario", required=True)

    plot = sub.add_parser("plot-data", help="convert a JSONL tick log into tabular plot files")
    plot.add_argument("log", type=Path, help="JSONL tick log written by run/sweep --log-dir")
    plot.add_argument("--out", type=Path, required=True, help="output directory")
    return p


def _emit(text: str, path: Path | None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    lam = scenario.lambdas[0] if args.lam is None else args.lam
    seeds = scenario.seeds[:1] if args.seeds is None else parse_seeds(args.seeds)
    if len(seeds) != 1:
        raise ConfigurationError(["seeds: run takes exactly one seed; use sweep for batches"])
    batch = run_batch(scenario, [lam], seeds, jobs=1, log_dir=args.log_dir)
    _emit(results_csv(batch), args.out)
    r = batch.runs[0]
    if not r.ok:
        print(f"run failed: {r.error}", file=sys.stderr)
        return EXIT_RUN_FAILED
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    lams = None if args.lam is None else parse_lambdas(args.lam)
    seeds = None if args.seeds is None else parse_seeds(args.seeds)
    batch = run_batch(scenario, lams, seeds, jobs=args.jobs, log_dir=args.log_dir)
    if args.out is None:
        sys.stdout.write(results_csv(batch))
        sys.stdout.write(aggregate_csv(batch))
    else:
        _emit(results_csv(batch), args.out)
        _emit(aggregate_csv(batch), _aggregate_path(args.out))
    if batch.n_failed:
        for r in batch.runs:
            if not r.ok:
                print(f"lambda={r.lam:g} seed={r.seed}: {r.error}", file=sys.stderr)
        return EXIT_RUN_FAILED
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    text = read_scenario_text(args.scenario)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError([f"parse error: {exc}"]) from exc
    errors = validate(data)
    if errors:
        raise ConfigurationError(errors)
    print(f"{args.scenario}: ok")
    return EXIT_OK


def _cmd_plot(args: argparse.Namespace) -> int:
    for path in emit_plot_data(read_tick_log(args.log), args.out):
        print(path)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": _cmd_run, "sweep": _cmd_sweep, "validate": _cmd_validate, "plot-data": _cmd_plot}
    try:
        return handlers[args.command](args)
    except ConfigurationError as exc:
        for err in exc.errors:
            print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID if args.command in ("validate", "plot-data") else EXIT_RUN_FAILED


if __name__ == "__main__":
    raise SystemExit(main())
