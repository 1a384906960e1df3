"""Command-line experiment runner.

    dpsac run --scenario set5 --scheduler dpsac --repeats 5
    dpsac sweep-fig6 | sweep-fig7 [--replot]
    dpsac list-scenarios
    dpsac validate-config run.yaml

Output lands in --out-dir, else $DPSAC_OUT, else ./results. Exit codes:
0 ok, 1 configuration error, 2 a run failed.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import yaml

from .engine import SCHEDULERS, RunConfig, SimulationError, Simulator
from .model import SCENARIO_NAMES, ScenarioError, ScenarioSpec, build_scenario, load_scenario, scenario_from_dict
from .scheduler import StrategyConfig, parse_strategy
from .updater import UPDATERS

log = logging.getLogger("dpsac")

CSV_COLUMNS = ["scenario", "scheduler", "updater", "strategy", "gamma", "seed", "syseff", "dilation", "wall_ms"]
OUT_ENV = "DPSAC_OUT"
FIG6_SCHEDULERS = ("dpsac", "mcios", "bios")
FIG7_JOINERS = ("EAP", "LAP5", "Silverton")
FIG7_UPDATERS = ("st", "dt", "ok")


class ConfigError(ValueError):
    pass


@dataclass
class CliConfig:
    """Everything a `run` needs; built from a YAML file and then flags."""
    scenario: str | dict = "set5"
    scheduler: str = "dpsac"
    updater: str = "st"
    strategy: str = "minmax"
    gamma: float | None = None
    repeats: int = 5
    seed: int | None = None  # first seed; default seeds are 1..repeats
    seeds: list | None = None
    max_clusters: int = 5
    threshold: float = 0.1
    bins: int = 20
    literal_line15: bool = False
    wall_time: bool = False
    jobs: int = 1
    out: str | None = None

    def strategy_config(self) -> StrategyConfig:
        s = parse_strategy(self.strategy)
        if self.gamma is not None:
            if s.kind != "minmax":
                raise ConfigError("--gamma only applies to the minmax strategy")
            s = StrategyConfig("minmax", self.gamma)
        return s

    def seed_list(self) -> list[int]:
        if self.seeds:
            return [int(s) for s in self.seeds]
        first = 1 if self.seed is None else self.seed
        return list(range(first, first + self.repeats))

    def validate(self) -> ScenarioSpec:
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.scheduler not in SCHEDULERS:
            raise ConfigError(f"unknown scheduler {self.scheduler!r}; choose from {list(SCHEDULERS)}")
        if self.updater not in UPDATERS:
            raise ConfigError(f"unknown updater {self.updater!r}; choose from {sorted(UPDATERS)}")
        if self.max_clusters < 1 or self.bins < 1 or not 0 < self.threshold:
            raise ConfigError("max_clusters and bins must be >= 1 and threshold > 0")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        try:
            self.strategy_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return resolve_scenario(self.scenario)


def resolve_scenario(sel) -> ScenarioSpec:
    """A built-in name, `dynamic:<joiner>`, a scenario YAML path, or an inline mapping."""
    try:
        if isinstance(sel, dict):
            return scenario_from_dict(sel)
        sel = str(sel)
        if sel.endswith((".yaml", ".yml")):
            return load_scenario(sel)
        base, _, joiner = sel.partition(":")
        sc = build_scenario(base)
        return sc.restrict_joins(joiner) if joiner else sc
    except (ScenarioError, OSError, KeyError, TypeError, yaml.YAMLError) as exc:
        raise ConfigError(f"bad scenario {sel!r}: {exc}") from None


def load_config(path) -> CliConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    known = {f.name for f in dataclasses.fields(CliConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")
    return CliConfig(**data)


def out_dir(arg) -> Path:
    path = Path(arg or os.environ.get(OUT_ENV) or "results")
    path.mkdir(parents=True, exist_ok=True)
    return path


# -- running ---------------------------------------------------------------

@dataclass(frozen=True)
class Job:
    scenario: ScenarioSpec
    run: RunConfig
    wall_time: bool = False


def _execute(job: Job) -> dict:
    t0 = time.perf_counter()
    try:
        rep = Simulator(job.scenario, job.run).run()
    except SimulationError as exc:
        raise SimulationError(f"{_name(job)}: {exc}") from None
    wall = (time.perf_counter() - t0) * 1e3
    s = job.run.strategy
    return {"scenario": job.scenario.name, "scheduler": job.run.scheduler, "updater": job.run.updater,
            "strategy": s.kind, "gamma": repr(s.gamma), "seed": str(job.run.seed),
            "syseff": repr(rep.system_efficiency), "dilation": repr(rep.dilation),
            "wall_ms": f"{wall:.1f}" if job.wall_time else "", "_audit": rep.audit, "_ceiling": rep.ceiling}


def execute_jobs(jobs, workers: int = 1) -> list[dict]:
    """Run `jobs`, returning rows in submission order."""
    jobs = list(jobs)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_execute, jobs))
    return [_execute(j) for j in jobs]


def _name(job: Job) -> str:
    return f"{job.scenario.name}/{job.run.scheduler}/{job.run.updater}/{job.run.strategy.label}/seed={job.run.seed}"


def aggregate(rows) -> dict:
    """Mean over the seeds of one configuration."""
    rows = list(rows)
    out = {k: rows[0][k] for k in ("scenario", "scheduler", "updater", "strategy", "gamma")}
    out["seed"] = "mean"
    for k in ("syseff", "dilation"):
        out[k] = repr(math.fsum(float(r[k]) for r in rows) / len(rows))
    walls = [r["wall_ms"] for r in rows if r["wall_ms"] != ""]
    out["wall_ms"] = f"{sum(float(w) for w in walls) / len(walls):.1f}" if walls else ""
    return out


def run_grid(configs, seeds, workers=1, wall_time=False) -> list[dict]:
    """`configs` is a list of (scenario, RunConfig template); rows come back
    configuration-major, each block closed by its aggregate row."""
    jobs = [Job(sc, dataclasses.replace(rc, seed=s), wall_time) for sc, rc in configs for s in seeds]
    for j in jobs:
        log.debug("queued %s", _name(j))
    results = execute_jobs(jobs, workers)
    rows = []
    n = len(seeds)
    for k in range(len(configs)):
        block = results[k * n:(k + 1) * n]
        rows.extend(block)
        rows.append(aggregate(block))
    return rows


def write_csv(rows, path: Path) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- charts ----------------------------------------------------------------

def grouped_bars(rows, x_key, group_key, metric, path: Path, title: str, ylabel: str) -> Path:
    """Grouped bar chart of aggregate rows; deterministic SVG output."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    agg = [r for r in rows if r["seed"] == "mean"]
    xs = list(dict.fromkeys(r[x_key] for r in agg))
    groups = list(dict.fromkeys(r[group_key] for r in agg))
    vals = {(r[x_key], r[group_key]): float(r[metric]) for r in agg}
    width = 0.8 / max(1, len(groups))
    with plt.rc_context({"svg.hashsalt": "dpsac", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(max(6.0, 0.9 * len(xs) + 2), 3.6))
        for g, name in enumerate(groups):
            pos = [i + (g - (len(groups) - 1) / 2) * width for i in range(len(xs))]
            ax.bar(pos, [vals.get((x, name), float("nan")) for x in xs], width, label=name)
        ax.set_xticks(range(len(xs)))
        ax.set_xticklabels(xs)
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.legend(fontsize="small")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path


def fig6_charts(csv_path: Path, out: Path) -> list[Path]:
    rows = read_csv(csv_path)
    return [grouped_bars(rows, "scenario", "scheduler", "syseff", out / "fig6_syseff.svg",
                         "System efficiency by congestion level", "efficiency"),
            grouped_bars(rows, "scenario", "scheduler", "dilation", out / "fig6_dilation.svg",
                         "Dilation by congestion level", "dilation")]


def fig7_charts(csv_path: Path, out: Path) -> list[Path]:
    rows = read_csv(csv_path)
    return [grouped_bars(rows, "scenario", "updater", "syseff", out / "fig7_syseff.svg",
                         "System efficiency by incoming application", "efficiency"),
            grouped_bars(rows, "scenario", "updater", "dilation", out / "fig7_dilation.svg",
                         "Dilation by incoming application", "dilation")]


# -- commands --------------------------------------------------------------

def _run_template(cfg: CliConfig, **over) -> RunConfig:
    base = dict(scheduler=cfg.scheduler, updater=cfg.updater, strategy=cfg.strategy_config(),
                max_clusters=cfg.max_clusters, threshold=cfg.threshold, bins=cfg.bins,
                literal_line15=cfg.literal_line15)
    base.update(over)
    return RunConfig(**base)


def cmd_run(cfg: CliConfig, out_arg=None) -> list[dict]:
    scenario = cfg.validate()
    rows = run_grid([(scenario, _run_template(cfg))], cfg.seed_list(), cfg.jobs, cfg.wall_time)
    dest = Path(cfg.out) if cfg.out else out_dir(out_arg) / "run.csv"
    dest.parent.mkdir(parents=True, exist_ok=True)
    write_csv(rows, dest)
    for r in rows:
        print(",".join(str(r[c]) for c in CSV_COLUMNS))
    log.info("wrote %s", dest)
    return rows


def fig6_configs(cfg: CliConfig):
    return [(build_scenario(f"set{i}"), _run_template(cfg, scheduler=s))
            for i in range(1, 11) for s in FIG6_SCHEDULERS]


def fig7_configs(cfg: CliConfig):
    dyn = build_scenario("dynamic")
    return [(dyn.restrict_joins(j), _run_template(cfg, scheduler="dpsac", updater=u))
            for j in FIG7_JOINERS for u in FIG7_UPDATERS]


def cmd_sweep(which: str, cfg: CliConfig, out_arg=None, replot=False) -> list[Path]:
    out = out_dir(out_arg)
    csv_path = out / f"{which}.csv"
    charts = fig6_charts if which == "fig6" else fig7_charts
    if not replot:
        configs = fig6_configs(cfg) if which == "fig6" else fig7_configs(cfg)
        rows = run_grid(configs, cfg.seed_list(), cfg.jobs, cfg.wall_time)
        write_csv(rows, csv_path)
    elif not csv_path.exists():
        raise ConfigError(f"--replot needs an existing {csv_path}")
    paths = [csv_path] + charts(csv_path, out)
    for p in paths:
        print(p)
    return paths


def cmd_list() -> None:
    for name in SCENARIO_NAMES:
        sc = build_scenario(name)
        comp = ", ".join(f"{k}x{v}" for k, v in sc.composition().items())
        joins = f"; joins: {', '.join(pj.spec.name for pj in sc.periodic_joins)}" if sc.periodic_joins else ""
        print(f"{name:8s} EIO={sc.expected_load():6.2f} GB/s  {comp}{joins}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dpsac", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML file with CliConfig keys; flags override it")
        sp.add_argument("--strategy", help="mindilation | maxsyseff | minmax[:gamma]")
        sp.add_argument("--gamma", type=float)
        sp.add_argument("--repeats", type=int)
        sp.add_argument("--seed", type=int, help="first seed (default 1)")
        sp.add_argument("--seeds", type=lambda s: [int(x) for x in s.split(",")], help="explicit list, e.g. 1,2,3")
        sp.add_argument("--max-clusters", dest="max_clusters", type=int)
        sp.add_argument("--threshold", type=float)
        sp.add_argument("--bins", type=int)
        sp.add_argument("--literal-line15", dest="literal_line15", action="store_const", const=True)
        sp.add_argument("--wall-time", dest="wall_time", action="store_const", const=True,
                        help="fill wall_ms (makes the CSV non-reproducible)")
        sp.add_argument("--jobs", type=int, help="parallel worker processes")
        sp.add_argument("--out-dir", dest="out_dir", help=f"output directory (default ${OUT_ENV} or ./results)")

    r = sub.add_parser("run", help="repeated seeded runs of one configuration")
    common(r)
    r.add_argument("--scenario", help="set1..set10, batch, dynamic[:JOINER], or a scenario YAML")
    r.add_argument("--scheduler", choices=SCHEDULERS)
    r.add_argument("--updater", choices=sorted(UPDATERS))
    r.add_argument("--out", help="CSV path (default <out-dir>/run.csv)")
    for name in ("sweep-fig6", "sweep-fig7"):
        s = sub.add_parser(name, help="scheduler comparison over sets" if name.endswith("6")
                           else "updater comparison on the dynamic scenario")
        common(s)
        s.add_argument("--replot", action="store_true", help="rebuild charts from the existing CSV only")
    sub.add_parser("list-scenarios", help="show built-in scenarios")
    v = sub.add_parser("validate-config", help="check a run config or scenario YAML")
    v.add_argument("path")
    return p


def _merge(cfg: CliConfig, args) -> CliConfig:
    over = {f.name: getattr(args, f.name) for f in dataclasses.fields(CliConfig)
            if getattr(args, f.name, None) is not None}
    return dataclasses.replace(cfg, **over)


def _validate_file(path) -> str:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    if isinstance(data, dict) and ("initial_batch" in data or "builtin" in data):
        sc = resolve_scenario(data)
        return f"scenario {sc.name}: {sc.num_applications} applications, EIO {sc.expected_load():.2f} GB/s"
    cfg = load_config(path)
    sc = cfg.validate()
    return f"run config: {sc.name} with {cfg.scheduler}/{cfg.updater}/{cfg.strategy_config().label}, seeds {cfg.seed_list()}"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "list-scenarios":
            cmd_list()
            return 0
        if args.command == "validate-config":
            print(_validate_file(args.path))
            return 0
        cfg = _merge(load_config(args.config) if args.config else CliConfig(), args)
        cfg.validate()
    except (ConfigError, ScenarioError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "run":
            cmd_run(cfg, args.out_dir)
        else:
            cmd_sweep(args.command[-4:], cfg, args.out_dir, args.replot)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # any failure inside a run is a runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
