"""Flat ``key = value`` run configuration.

Recognised keys (defaults in brackets)::

    mesh.n            structured cube subdivisions [4]
    mesh.file         Gmsh MSH 2.2 file, overrides mesh.n
    law.a             linear pressure coefficient [1.0]
    law.b             power-law coefficient [1.0]
    law.gamma         adiabatic exponent [2.0]
    scheme.dt         time step; ignored when scheme.dt_rule is h or h2 [0.01]
    scheme.dt_rule    fixed | h | h2 [fixed]
    scheme.dt_scale   c in dt = c h or dt = c h^2 [1.0]
    scheme.mu         shear viscosity [1.0]
    scheme.variant    standard | stabilized | modified_upwind [standard]
    scheme.epsilon    stabilisation exponent in [0, 1) [0.0]
    solver.tol        scaled nonlinear tolerance [1e-11]
    solver.max_newton Newton iteration budget [30]
    solver.max_picard frozen-direction iteration budget [3]
    run.t_end         final time [1.0]
    run.solution      rest | mms1 | pulse [mms1]
    run.deterministic true | false [true]
    out.dir           output directory [out]
    out.vtk_every     VTK cadence in steps, 0 disables [0]

Lines starting with ``#`` and blank lines are ignored.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .scheme import Variant


class ConfigError(ValueError):
    def __init__(self, msg, lineno=None, path=None):
        where = f"{path or '<config>'}:{lineno}: " if lineno is not None else ""
        super().__init__(where + msg)
        self.lineno = lineno


@dataclass(frozen=True)
class RunConfig:
    mesh_n: int = 4
    mesh_file: str = ""
    law_a: float = 1.0
    law_b: float = 1.0
    law_gamma: float = 2.0
    dt: float = 0.01
    dt_rule: str = "fixed"
    dt_scale: float = 1.0
    mu: float = 1.0
    variant: str = "standard"
    epsilon: float = 0.0
    solver_tol: float = 1e-11
    max_newton: int = 30
    max_picard: int = 3
    t_end: float = 1.0
    solution: str = "mms1"
    deterministic: bool = True
    out_dir: str = "out"
    vtk_every: int = 0

    def __post_init__(self):
        validate(self)

    def replace(self, **kw) -> "RunConfig":
        return replace(self, **kw)


KEYS = {
    "mesh.n": "mesh_n", "mesh.file": "mesh_file",
    "law.a": "law_a", "law.b": "law_b", "law.gamma": "law_gamma",
    "scheme.dt": "dt", "scheme.dt_rule": "dt_rule", "scheme.dt_scale": "dt_scale",
    "scheme.mu": "mu", "scheme.variant": "variant", "scheme.epsilon": "epsilon",
    "solver.tol": "solver_tol", "solver.max_newton": "max_newton", "solver.max_picard": "max_picard",
    "run.t_end": "t_end", "run.solution": "solution", "run.deterministic": "deterministic",
    "out.dir": "out_dir", "out.vtk_every": "vtk_every",
}
_ATTR_TO_KEY = {v: k for k, v in KEYS.items()}


def validate(cfg: RunConfig) -> None:
    from .solutions import builtin_solutions

    def need(cond, key, msg):
        if not cond:
            raise ConfigError(f"{key}: {msg}")

    need(cfg.mesh_n >= 1, "mesh.n", "must be >= 1")
    need(cfg.law_gamma > 1, "law.gamma", "must exceed 1")
    need(cfg.law_a >= 0 and cfg.law_b >= 0 and cfg.law_a + cfg.law_b > 0, "law.a/law.b",
         "must be >= 0 and not both zero")
    need(cfg.dt > 0, "scheme.dt", "must be positive")
    need(cfg.dt_rule in ("fixed", "h", "h2"), "scheme.dt_rule", "must be fixed, h or h2")
    need(cfg.dt_scale > 0, "scheme.dt_scale", "must be positive")
    need(cfg.mu > 0, "scheme.mu", "must be positive")
    need(cfg.variant in {v.value for v in Variant}, "scheme.variant", f"unknown variant {cfg.variant!r}")
    need(0 <= cfg.epsilon < 1, "scheme.epsilon", "must lie in [0, 1)")
    need(cfg.solver_tol > 0, "solver.tol", "must be positive")
    need(cfg.max_newton >= 1 and cfg.max_picard >= 0, "solver.max_newton", "iteration budgets too small")
    need(cfg.t_end > 0, "run.t_end", "must be positive")
    need(cfg.solution in builtin_solutions(), "run.solution", f"unknown solution {cfg.solution!r}")
    need(cfg.vtk_every >= 0, "out.vtk_every", "must be >= 0")


def _convert(attr, raw, lineno, path):
    kind = {f.name: f.type for f in fields(RunConfig)}[attr]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        return raw
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {_ATTR_TO_KEY[attr]}", lineno, path) from None


def parse_config_text(text: str, path=None, base: RunConfig | None = None) -> RunConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"expected key = value, got {line!r}", lineno, path)
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno, path)
        values[KEYS[key]] = _convert(KEYS[key], raw, lineno, path)
    try:
        return replace(base, **values) if base else RunConfig(**values)
    except ConfigError as e:
        raise ConfigError(str(e), None, path) from None


def parse_config(path) -> RunConfig:
    return parse_config_text(Path(path).read_text(), path=str(path))


def format_config(cfg: RunConfig) -> str:
    out = []
    for attr, value in asdict(cfg).items():
        if isinstance(value, bool):
            value = str(value).lower()
        elif isinstance(value, float):
            value = repr(value)
        out.append(f"{_ATTR_TO_KEY[attr]} = {value}")
    return "\n".join(out) + "\n"


def write_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(format_config(cfg))
