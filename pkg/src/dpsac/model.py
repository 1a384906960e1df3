"""Platform and application models, the APEX catalog and experiment scenarios."""
from __future__ import annotations

import dataclasses
import math
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import yaml


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class SystemConfig:
    pfs_bandwidth: int = 100  # GB/s
    buffer_size: int = 300  # GB
    total_nodes: int = 40960
    node_peak_bandwidth: float = 1.0  # GB/s per node

    def __post_init__(self):
        if self.pfs_bandwidth <= 0 or self.buffer_size <= 0 or self.total_nodes <= 0:
            raise ValueError(f"invalid system configuration: {self}")
        if self.node_peak_bandwidth <= 0:
            raise ValueError("node_peak_bandwidth must be positive")


def derive_probability(io_time: float, period: float) -> float:
    """Fraction of a period spent in the I/O phase."""
    if not 0 < io_time < period:
        raise ValueError(f"need 0 < io_time < period, got io_time={io_time}, period={period}")
    return io_time / period


@dataclass(frozen=True)
class ApplicationSpec:
    name: str
    bandwidth: int  # B_i, GB/s
    period: float  # T_i, s
    io_time: float  # P_i * T_i, s
    num_instances: int = 1
    nodes: int = 0  # beta_i; 0 means derive from bandwidth

    def __post_init__(self):
        if int(self.bandwidth) != self.bandwidth or self.bandwidth <= 0:
            raise ValueError(f"{self.name}: bandwidth must be a positive integer, got {self.bandwidth}")
        object.__setattr__(self, "bandwidth", int(self.bandwidth))
        derive_probability(self.io_time, self.period)
        if self.num_instances < 1:
            raise ValueError(f"{self.name}: num_instances must be >= 1")
        if self.nodes < 0:
            raise ValueError(f"{self.name}: nodes must be non-negative")

    @property
    def io_probability(self) -> float:
        return derive_probability(self.io_time, self.period)

    @property
    def compute_work(self) -> float:
        return self.period - self.io_time

    @property
    def io_volume(self) -> float:
        return self.io_time * self.bandwidth

    @property
    def dedicated_efficiency(self) -> float:
        """rho_i = W_i / T_i."""
        return self.compute_work / self.period

    @property
    def expected_load(self) -> float:
        return self.io_probability * self.bandwidth

    def with_nodes(self, node_peak_bandwidth: float) -> "ApplicationSpec":
        return dataclasses.replace(self, nodes=int(round(self.bandwidth / node_peak_bandwidth)))

    def with_instances(self, n: int) -> "ApplicationSpec":
        return dataclasses.replace(self, num_instances=n)


def apex_catalog(system: SystemConfig | None = None) -> list[ApplicationSpec]:
    system = system or SystemConfig()
    apps = [
        ApplicationSpec("EAP", 160, 5671, 20, 13),
        ApplicationSpec("LAP", 80, 12682, 25, 4),
        ApplicationSpec("Silverton", 160, 15005, 280, 2),
        ApplicationSpec("VPIC", 160, 4483, 23.4, 1),
    ]
    return [a.with_nodes(system.node_peak_bandwidth) for a in apps]


def _factor_suffix(factor: float) -> str:
    return str(int(factor)) if float(factor).is_integer() else repr(float(factor))


def scale_application(spec: ApplicationSpec, factor: float) -> ApplicationSpec:
    """Scale the I/O phase length by `factor`, holding compute work fixed."""
    if factor <= 0:
        raise ValueError("scale factor must be positive")
    if factor == 1:
        return spec
    io_time = spec.io_time * factor
    period = spec.compute_work + io_time
    assert io_time < period
    return dataclasses.replace(spec, name=spec.name + _factor_suffix(factor), io_time=io_time, period=period)


def time_unit(apps) -> float:
    """Mean io_time over `apps`: the discretisation quantum of the load model."""
    apps = list(apps)
    if not apps:
        raise ValueError("time unit of an empty application set")
    return math.fsum(a.io_time for a in apps) / len(apps)


# ---------------------------------------------------------------------------
# scenarios

@dataclass(frozen=True)
class PeriodicJoin:
    spec: ApplicationSpec
    period: float
    instances: int

    def __post_init__(self):
        if self.period <= 0 or self.instances < 1:
            raise ValueError(f"invalid periodic join: {self}")

    def join_times(self, horizon: float) -> list[float]:
        times, k = [], 1
        while k * self.period < horizon:
            times.append(k * self.period)
            k += 1
        return times


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    initial_batch: tuple  # of (ApplicationSpec, count)
    periodic_joins: tuple = ()  # of PeriodicJoin
    horizon: float | None = None  # joins are released strictly before this time
    system: SystemConfig = field(default_factory=SystemConfig)

    def __post_init__(self):
        for spec, count in self.initial_batch:
            if count < 1:
                raise ValueError(f"{self.name}: count for {spec.name} must be >= 1")

    def batch_apps(self) -> list[ApplicationSpec]:
        return [spec for spec, count in self.initial_batch for _ in range(count)]

    @property
    def join_horizon(self) -> float:
        if self.horizon is not None:
            return self.horizon
        return max(s.num_instances * s.period for s, _ in self.initial_batch)

    def joins(self) -> list[tuple[float, ApplicationSpec]]:
        """(release time, spec) for every periodic joiner, ordered by time then declaration."""
        out = []
        for order, pj in enumerate(self.periodic_joins):
            spec = pj.spec.with_instances(pj.instances)
            out.extend((t, order, spec) for t in pj.join_times(self.join_horizon))
        out.sort(key=lambda x: (x[0], x[1]))
        return [(t, s) for t, _, s in out]

    @property
    def num_applications(self) -> int:
        return sum(c for _, c in self.initial_batch) + len(self.joins())

    def expected_load(self) -> float:
        return math.fsum(s.expected_load * c for s, c in self.initial_batch)

    def composition(self) -> dict[str, int]:
        return {s.name: c for s, c in self.initial_batch}

    def restrict_joins(self, name: str) -> "ScenarioSpec":
        kept = tuple(pj for pj in self.periodic_joins if pj.spec.name == name)
        if not kept:
            raise ScenarioError(f"scenario {self.name} has no periodic join named {name!r}")
        return dataclasses.replace(self, name=f"{self.name}-{name}", periodic_joins=kept)


_NAME_RE = re.compile(r"^([A-Za-z]+)([0-9]*\.?[0-9]+)?$")


def lookup_app(name: str, system: SystemConfig | None = None) -> ApplicationSpec:
    """Resolve catalog names, optionally suffixed by a scale factor (EAP10, Silverton0.5)."""
    m = _NAME_RE.match(name)
    catalog = {a.name: a for a in apex_catalog(system)}
    if not m or m.group(1) not in catalog:
        raise ScenarioError(f"unknown application {name!r}")
    spec = catalog[m.group(1)]
    if m.group(2):
        spec = scale_application(spec, float(m.group(2)))
        if spec.name != name:
            spec = dataclasses.replace(spec, name=name)
        if spec.name in BATCH_INSTANCES:
            spec = spec.with_instances(BATCH_INSTANCES[spec.name])
    return spec


# application -> count in each congestion set 1..10
TABLE2 = {
    "EAP": {5: 1, 9: 1},
    "LAP": {1: 10, 2: 8, 3: 6, 4: 4, 5: 2, 6: 3, 7: 2, 8: 2, 10: 1},
    "VPIC": {7: 1, 9: 1},
    "EAP5": {4: 1, 7: 1, 10: 1},
    "LAP5": {1: 2, 2: 1, 3: 1, 4: 1, 5: 1},
    "Silverton0.5": {4: 1, 5: 1, 6: 1, 8: 2, 10: 1},
    "EAP10": {3: 1, 4: 1, 7: 1},
    "VPIC10": {2: 1, 4: 1, 5: 1, 8: 1},
    "Silverton": {1: 1, 4: 1, 5: 1, 6: 1, 9: 1},
}

# Batch-experiment instance counts. Scaled apps take these everywhere (EAP5/EAP10 are not
# listed and keep EAP's 13); unscaled apps only in the batch/dynamic scenarios.
BATCH_INSTANCES = {"EAP": 13, "LAP": 4, "LAP5": 2, "Silverton0.5": 2, "VPIC10": 1, "Silverton": 1}

# periodic joiners: (application, join period, instances per join)
TABLE4 = (("EAP", 6 * 5671, 5), ("LAP5", 3 * 12682, 2), ("Silverton", 2 * 15005, 1))

SCENARIO_NAMES = [f"set{i}" for i in range(1, 11)] + ["batch", "dynamic"]


def build_scenario(set_id, system: SystemConfig | None = None) -> ScenarioSpec:
    """Built-in scenarios: congestion sets 1..10, "batch", and "dynamic" (batch plus periodic joiners)."""
    system = system or SystemConfig()
    key = str(set_id)
    if key.startswith("set"):
        key = key[3:]
    if key in ("batch", "dynamic"):
        batch = tuple((lookup_app(n, system).with_instances(k), 2 if n == "LAP" else 1)
                      for n, k in BATCH_INSTANCES.items())
        if key == "batch":
            return ScenarioSpec("batch", batch, system=system)
        joins = tuple(PeriodicJoin(lookup_app(n, system), p, k) for n, p, k in TABLE4)
        return ScenarioSpec("dynamic", batch, joins, system=system)
    try:
        idx = int(key)
    except ValueError:
        raise ScenarioError(f"unknown scenario {set_id!r}") from None
    if not 1 <= idx <= 10:
        raise ScenarioError(f"unknown scenario {set_id!r}")
    batch = tuple((lookup_app(name, system), counts[idx])
                  for name, counts in TABLE2.items() if idx in counts)
    scenario = ScenarioSpec(f"set{idx}", batch, system=system)
    teio = scenario.expected_load()
    if teio >= system.pfs_bandwidth:
        warnings.warn(f"set{idx}: total expected load {teio:.2f} >= PFS bandwidth")
    return scenario


# ---------------------------------------------------------------------------
# scenario files

def _app_from_entry(entry, system: SystemConfig) -> ApplicationSpec:
    if isinstance(entry, str):
        return lookup_app(entry, system)
    if isinstance(entry, dict):
        try:
            spec = ApplicationSpec(
                name=str(entry["name"]),
                bandwidth=entry["bandwidth"],
                period=float(entry["period"]),
                io_time=float(entry["io_time"]),
                num_instances=int(entry.get("instances", 1)),
                nodes=int(entry.get("nodes", 0)),
            )
        except KeyError as exc:
            raise ScenarioError(f"application entry missing field {exc}") from None
        if spec.nodes == 0:
            spec = spec.with_nodes(system.node_peak_bandwidth)
        return spec
    raise ScenarioError(f"bad application entry: {entry!r}")


def scenario_from_dict(data: dict) -> ScenarioSpec:
    """Build a scenario from the parsed YAML mapping (schema in README)."""
    if not isinstance(data, dict):
        raise ScenarioError("scenario document must be a mapping")
    system = SystemConfig(**data.get("system", {}))
    if "builtin" in data:
        return build_scenario(data["builtin"], system)
    batch = []
    for item in data.get("initial_batch", []):
        spec = _app_from_entry(item["app"], system)
        if "instances" in item:
            spec = spec.with_instances(int(item["instances"]))
        batch.append((spec, int(item.get("count", 1))))
    if not batch:
        raise ScenarioError("scenario needs a non-empty initial_batch")
    joins = []
    for item in data.get("periodic_joins", []):
        spec = _app_from_entry(item["app"], system)
        joins.append(PeriodicJoin(spec, float(item["period"]), int(item.get("instances", spec.num_instances))))
    try:
        return ScenarioSpec(str(data.get("name", "custom")), tuple(batch), tuple(joins),
                            data.get("horizon"), system)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None


def load_scenario(path) -> ScenarioSpec:
    with open(Path(path)) as fh:
        return scenario_from_dict(yaml.safe_load(fh))


def scenario_to_dict(scenario: ScenarioSpec) -> dict:
    def app(spec):
        return {"name": spec.name, "bandwidth": spec.bandwidth, "period": spec.period,
                "io_time": spec.io_time, "instances": spec.num_instances, "nodes": spec.nodes}

    return {
        "name": scenario.name,
        "system": dataclasses.asdict(scenario.system),
        "initial_batch": [{"app": app(s), "count": c} for s, c in scenario.initial_batch],
        "periodic_joins": [{"app": app(pj.spec), "period": pj.period, "instances": pj.instances}
                           for pj in scenario.periodic_joins],
        "horizon": scenario.horizon,
    }


@dataclass
class ApplicationRuntime:
    """Live progress of one application inside a simulation."""

    app_id: str
    spec: ApplicationSpec
    release: float
    finish: float | None = None
    instances_done: int = 0
    phase: str = "compute"  # compute | io | done
    remaining: float = 0.0  # seconds of compute, or GB of I/O, left in the current phase
    bytes_pfs: float = 0.0
    bytes_buffer: float = 0.0
    io_started: float | None = None

    @property
    def bandwidth(self) -> int:
        return self.spec.bandwidth

    @property
    def nodes(self) -> int:
        return self.spec.nodes

    @property
    def rho(self) -> float:
        return self.spec.dedicated_efficiency

    @property
    def done(self) -> bool:
        return self.phase == "done"
