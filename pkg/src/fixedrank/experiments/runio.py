"""Configuration parsing and file emission for the scenario runners."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import InvalidInputError
from ..solvers import IterationTrace

SCENARIOS = (
    "quadratic",
    "compare",
    "oscillation",
    "radius",
    "landscape",
    "init_study",
    "runtime",
    "phase",
)

_TOP_LEVEL_KEYS = {
    "scenario",
    "kind",
    "n1",
    "n2",
    "r",
    "sampling",
    "seeds",
    "out_dir",
    "threads",
    "params",
}

# scenario-specific knobs; unknown keys are rejected by name
_PARAM_KEYS: dict[str, set[str]] = {
    "quadratic": {"q", "theta_points", "max_iters"},
    "compare": {"algorithms", "max_iters", "stop_tol", "start", "start_scale"},
    "oscillation": {"d_values", "max_iters", "start_scale"},
    "radius": {"mu_points", "grid_points", "full_oracle_stride", "mu_max", "eta_max"},
    "landscape": {"mu_points", "eta_points", "mu_max", "eta_max"},
    "init_study": {"sigmas", "max_iters", "init_seed"},
    "runtime": {"cells", "max_iters", "stop_tol"},
    "phase": {"ranks", "samplings", "trials", "max_iters", "success_tol"},
    "analyze": set(),
    "solve": {"algorithm", "retraction", "stepsize", "mu", "momentum", "lazy_d",
              "momentum_q", "max_iters", "stop_tol", "init", "sigma"},
}


@dataclass
class ScenarioConfig:
    scenario: str
    kind: str = "mc"
    n1: int = 30
    n2: int = 30
    r: int = 2
    sampling: float = 0.6
    seeds: list[int] = field(default_factory=lambda: [0])
    out_dir: str = "."
    threads: int = 1
    params: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.scenario not in _PARAM_KEYS:
            raise InvalidInputError(f"unknown scenario {self.scenario!r}")
        if self.kind not in ("mc", "ms"):
            raise InvalidInputError(f"unknown instance kind {self.kind!r}")
        if not self.seeds:
            raise InvalidInputError("seeds list must be nonempty")
        if self.threads < 1:
            raise InvalidInputError("threads must be >= 1")
        allowed = _PARAM_KEYS[self.scenario]
        for key in self.params:
            if key not in allowed:
                raise InvalidInputError(
                    f"unknown config field params.{key} for scenario {self.scenario}"
                )


def load_config(source: str | Path | dict, scenario: str) -> ScenarioConfig:
    """Build a validated ScenarioConfig from a JSON file or a dict."""
    if isinstance(source, dict):
        doc = dict(source)
    else:
        try:
            doc = json.loads(Path(source).read_text())
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"config is not valid JSON: {exc}") from exc
    for key in doc:
        if key not in _TOP_LEVEL_KEYS:
            raise InvalidInputError(f"unknown config field {key}")
    declared = doc.pop("scenario", scenario)
    if declared != scenario:
        raise InvalidInputError(
            f"config field scenario={declared!r} does not match requested {scenario!r}"
        )
    cfg = ScenarioConfig(scenario=scenario, **doc)
    cfg.validate()
    return cfg


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ScenarioResult:
    scenario: str
    summary_rows: list[dict] = field(default_factory=list)
    checks: list[Check] = field(default_factory=list)
    traces: dict[str, IterationTrace] = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks.append(Check(name, bool(passed), detail))

    def write(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if self.summary_rows:
            write_csv(self.summary_rows, out / "summary.csv")
        for key, trace in self.traces.items():
            trace.to_csv(out / f"trace_{key}.csv")
        report = {
            "scenario": self.scenario,
            "passed": self.passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "detail": c.detail}
                for c in self.checks
            ],
            "extras": _jsonable(self.extras),
        }
        (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
        return out


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, (int, float, str, bool)) or value is None:
        return value
    return repr(value)


def write_csv(rows: list[dict], path: str | Path) -> None:
    """Summary CSV with repr-formatted floats so values round-trip exactly."""
    if not rows:
        return
    columns: list[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(row.get(c, "")) for c in columns])


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as handle:
        return [dict(row) for row in csv.DictReader(handle)]


def write_gnuplot(
    path: str | Path,
    title: str,
    csv_name: str,
    xlabel: str,
    ylabel: str,
    series: list[tuple[int, int, str]],
    logscale_y: bool = False,
) -> None:
    """Minimal gnuplot script plotting columns of an emitted CSV."""
    lines = [
        "set datafile separator ','",
        f"set title '{title}'",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{ylabel}'",
        "set key outside",
    ]
    if logscale_y:
        lines.append("set logscale y")
    plots = [
        f"'{csv_name}' every ::1 using {x}:{y} with linespoints title '{label}'"
        for x, y, label in series
    ]
    lines.append("plot " + ", \\\n     ".join(plots))
    Path(path).write_text("\n".join(lines) + "\n")
