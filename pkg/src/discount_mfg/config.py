"""Run configuration stored as TOML.

Schema (every section optional, unknown keys rejected)::

    [problem]            dimension
    [problem.hamiltonian] kappa, exponent, [problem.hamiltonian.potential] kind, amplitude, frequency
    [problem.coupling]    coefficient, exponent, [problem.coupling.potential] ...
    [grid]               n, d
    [solver]             any SolverParams field
    [sweep]              schedule (list)  or  eps0, ratio, count;  warm_start, workers
    [output]             directory, formats (subset of "csv", "bin", "json")

Floats are written with ``repr`` so a dump/load cycle is exact.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import tomli_w

from .dual import MIN_CELLS, SolverParams
from .errors import ConfigError, UsageError
from .grid import TorusGrid
from .problem import Potential, ProblemSpec, power_spec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

FORMATS = ("csv", "bin", "json")


@dataclass(frozen=True)
class SweepConfig:
    schedule: tuple = tuple(0.1 * 0.5**k for k in range(8))
    warm_start: bool = True
    workers: int = 1

    def __post_init__(self):
        sched = tuple(float(e) for e in self.schedule)
        object.__setattr__(self, "schedule", sched)
        if not sched:
            raise ConfigError("the schedule needs at least one discount", "sweep.schedule")
        if any(e <= 0 for e in sched) or any(b >= a for a, b in zip(sched, sched[1:])):
            raise ConfigError(f"schedule must be positive and strictly decreasing, got {list(sched)}",
                              "sweep.schedule")
        if int(self.workers) < 1:
            raise ConfigError("must be at least 1", "sweep.workers")

    @classmethod
    def from_dict(cls, data):
        _check_table(data, {"schedule", "eps0", "ratio", "count", "warm_start", "workers"}, "sweep")
        kw = {k: data[k] for k in ("warm_start", "workers") if k in data}
        if "schedule" in data:
            if any(k in data for k in ("eps0", "ratio", "count")):
                raise ConfigError("give either schedule or eps0/ratio/count", "sweep")
            kw["schedule"] = tuple(data["schedule"])
        elif any(k in data for k in ("eps0", "ratio", "count")):
            eps0, ratio, count = data.get("eps0", 0.1), data.get("ratio", 0.5), int(data.get("count", 8))
            if not (eps0 > 0 and 0 < ratio < 1):
                raise ConfigError("need eps0 > 0 and 0 < ratio < 1", "sweep")
            kw["schedule"] = tuple(eps0 * ratio**k for k in range(count))
        return cls(**kw)

    def to_dict(self):
        return {"schedule": list(self.schedule), "warm_start": bool(self.warm_start),
                "workers": int(self.workers)}


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "runs"
    formats: tuple = ("csv", "json")

    def __post_init__(self):
        fm = tuple(self.formats)
        object.__setattr__(self, "formats", fm)
        bad = set(fm) - set(FORMATS)
        if bad:
            raise ConfigError(f"unknown formats {sorted(bad)}; choose from {FORMATS}", "output.formats")

    @classmethod
    def from_dict(cls, data):
        _check_table(data, {"directory", "formats"}, "output")
        kw = dict(data)
        if "formats" in kw:
            kw["formats"] = tuple(kw["formats"])
        return cls(**kw)

    def to_dict(self):
        return {"directory": self.directory, "formats": list(self.formats)}


def _check_table(data, allowed, location):
    if not isinstance(data, dict):
        raise ConfigError("expected a table", location)
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", location)


def example_problem() -> ProblemSpec:
    return power_spec(V=Potential("example"))


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemSpec = field(default_factory=example_problem)
    grid: TorusGrid = TorusGrid(512)
    solver: SolverParams = SolverParams()
    sweep: SweepConfig = SweepConfig()
    output: OutputConfig = OutputConfig()

    def __post_init__(self):
        if self.grid.d != self.problem.dimension:
            raise ConfigError(f"grid d={self.grid.d} but problem dimension={self.problem.dimension}", "grid.d")
        if self.grid.n < MIN_CELLS:
            raise ConfigError(f"need at least {MIN_CELLS} cells per axis, got {self.grid.n}", "grid.n")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        _check_table(data, {"problem", "grid", "solver", "sweep", "output"}, "<root>")
        kw = {}
        if "problem" in data:
            kw["problem"] = ProblemSpec.from_dict(data["problem"])
        if "grid" in data:
            g = data["grid"]
            _check_table(g, {"n", "d"}, "grid")
            d = g.get("d", kw["problem"].dimension if "problem" in kw else 1)
            try:
                kw["grid"] = TorusGrid(g.get("n", 512), d)
            except UsageError as exc:
                raise ConfigError(str(exc), "grid") from exc
        elif "problem" in kw and kw["problem"].dimension != 1:
            kw["grid"] = TorusGrid(64, kw["problem"].dimension)
        if "solver" in data:
            kw["solver"] = SolverParams.from_dict(data["solver"])
        if "sweep" in data:
            kw["sweep"] = SweepConfig.from_dict(data["sweep"])
        if "output" in data:
            kw["output"] = OutputConfig.from_dict(data["output"])
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {
            "problem": self.problem.to_dict(),
            "grid": {"n": self.grid.n, "d": self.grid.d},
            "solver": self.solver.to_dict(),
            "sweep": self.sweep.to_dict(),
            "output": self.output.to_dict(),
        }

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def dump(self, path) -> Path:
        path = Path(path)
        path.write_text(self.dumps())
        return path

    def with_changes(self, **kw) -> "RunConfig":
        return replace(self, **kw)


def load_config(path) -> RunConfig:
    """Read and validate a TOML run configuration."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse TOML: {exc}", path=path) from exc
    try:
        return RunConfig.from_dict(data)
    except ConfigError as exc:
        raise ConfigError(exc.detail, exc.location, path=path) from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value: {exc}", path=path) from exc


def loads_config(text: str) -> RunConfig:
    return RunConfig.from_dict(tomllib.loads(text))
