"""Time loop, runtime invariant checks and convergence studies."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .config import RunConfig
from .gmsh import read_msh
from .mesh import build_structured_cube
from .output import write_vtk
from .scheme import PositivityLost, Scheme, SchemeConfig, StepState, Variant, advance, reference_scales
from .solutions import boundary_velocity_defect, builtin_solutions
from .solver import SolverConfig, SolverError
from .spaces import CellField, project_CR, project_Q
from .thermo import make_law

log = logging.getLogger(__name__)

MASS_RTOL = 1e-11
BOUNDARY_TOL = 1e-12


@dataclass
class RunResult:
    ok: bool
    ledger: dg.EnergyLedger
    h: float
    dt: float
    steps: int
    final_state: StepState | None = None
    failure: dict | None = None
    checks: dict = field(default_factory=dict)
    sup_m1: float = math.nan
    grad_error: float = math.nan
    sup_rel_energy: float = math.nan
    wall_time: float = 0.0

    @property
    def error_functional(self) -> float:
        """``sup_n`` pointwise part plus cumulative gradient error."""
        return self.sup_m1 + self.grad_error

    def summary(self) -> dict:
        return {
            "ok": self.ok, "h": self.h, "dt": self.dt, "steps": self.steps,
            "failure": self.failure, "checks": self.checks,
            "error_functional": self.error_functional, "sup_m1": self.sup_m1,
            "grad_error": self.grad_error, "sup_rel_energy": self.sup_rel_energy,
            "wall_time": self.wall_time,
        }


def build_mesh(cfg: RunConfig):
    if cfg.mesh_file:
        return read_msh(cfg.mesh_file)
    return build_structured_cube(cfg.mesh_n)


def time_step(cfg: RunConfig, h: float) -> tuple[float, int]:
    """Step size and count; the nominal step is shortened to land on ``t_end``."""
    if cfg.dt_rule == "h2":
        nominal = cfg.dt_scale * h * h
    elif cfg.dt_rule == "h":
        nominal = cfg.dt_scale * h
    else:
        nominal = cfg.dt
    steps = max(1, math.ceil(cfg.t_end / nominal - 1e-9))
    return cfg.t_end / steps, steps


def initial_state(sol, mesh) -> StepState:
    rho = CellField(mesh, project_Q(lambda x: sol.r(0.0, x), mesh))
    u = project_CR(lambda x: sol.V(0.0, x), mesh, zero_trace=True)
    return StepState(rho, u, 0, 0.0)


def _row(state, law, scheme, sol, exact, prev_row=None, diss=None, dt=0.0, report=None):
    mesh = state.mesh
    row = dg.LedgerRow(
        time=state.t, mass=dg.total_mass(state.rho, mesh),
        kinetic=dg.kinetic_energy(state), internal=dg.internal_energy(state, law),
        step=state.n, min_rho=float(state.rho.values.min()),
    )
    if prev_row is not None:
        row.viscous_cum = prev_row.viscous_cum + dt * dg.viscous_rate(state.u, scheme.cfg.mu)
        row.D_time_u = prev_row.D_time_u + diss["D_time_u"]
        row.D_space_u = prev_row.D_space_u + diss["D_space_u"]
        row.D_time_rho = prev_row.D_time_rho + diss["D_time_rho"]
        row.D_space_rho = prev_row.D_space_rho + diss["D_space_rho"]
        row.tc_dissipation = prev_row.tc_dissipation + diss["tc"]
        row.source_work = prev_row.source_work + dt * dg.source_work(scheme, state)
        row.grad_error_cum = prev_row.grad_error_cum
    if report is not None:
        row.iterations = report.iterations
        row.residual = report.history[-1]
    if exact:
        r_ref, u_ref = dg.projected_reference(sol, state.t, mesh)
        row.rel_energy = dg.relative_energy(state, r_ref, u_ref, law)
        if prev_row is not None:
            row.grad_error_cum += dt * dg.gradient_error(state, sol, state.t)
        row.m1_functional = dg.m1_pointwise(state, sol, state.t, law) + row.grad_error_cum
    return row


def run(cfg: RunConfig, out_dir=None, write=True) -> RunResult:
    """Integrate to ``t_end``; ``ok`` is False on solver failure or a broken invariant."""
    t0 = time.perf_counter()
    mesh = build_mesh(cfg)
    law = make_law(cfg.law_a, cfg.law_b, cfg.law_gamma)
    sol = builtin_solutions()[cfg.solution]
    dt, steps = time_step(cfg, mesh.h)
    variant = Variant(cfg.variant)
    scfg = SchemeConfig(dt=dt, mu=cfg.mu, variant=variant, epsilon=cfg.epsilon,
                        sources=sol.sources(law, cfg.mu), t_end=cfg.t_end)
    solver_cfg = SolverConfig(nonlinear_tol=cfg.solver_tol, max_newton=cfg.max_newton,
                              max_picard=cfg.max_picard)
    out = Path(out_dir or cfg.out_dir)
    if write:
        out.mkdir(parents=True, exist_ok=True)

    checks = {"boundary_velocity": boundary_velocity_defect(sol, mesh, times=(0.0, 0.5 * cfg.t_end, cfg.t_end))}
    state = initial_state(sol, mesh)
    scales = reference_scales(state)
    scheme = Scheme(mesh, law, scfg)
    ledger = dg.EnergyLedger([_row(state, law, scheme, sol, sol.exact)])
    result = RunResult(ok=True, ledger=ledger, h=mesh.h, dt=dt, steps=0, checks=checks)
    if checks["boundary_velocity"] > BOUNDARY_TOL:
        result.ok = False
        result.failure = {"step": 0, "reason": "BOUNDARY_INCOMPATIBLE", "detail": checks["boundary_velocity"]}
    if write and cfg.vtk_every:
        write_vtk(state, mesh, out / "state_0000.vtk")

    expected_mass = ledger.rows[0].mass
    slack = 10.0 * cfg.solver_tol
    n = 0
    while result.ok and n < steps:
        try:
            new, report = advance(state, scfg, law, mesh, solver_cfg, scales=scales, scheme=scheme)
        except SolverError as e:
            result.ok = False
            result.failure = {"step": n + 1, "reason": type(e).__name__, "detail": str(e),
                              "history": getattr(e, "history", None)}
            break
        except PositivityLost as e:
            result.ok = False
            result.failure = {"step": n + 1, "reason": "POSITIVITY_LOST", "detail": str(e)}
            break
        diss = dg.step_dissipation(state, new, dt, variant, cfg.epsilon, law)
        row = _row(new, law, scheme, sol, sol.exact, ledger.rows[-1], diss, dt, report)
        ledger.rows.append(row)
        expected_mass += dt * float(np.dot(mesh.cell_volume, scheme.g))
        state, n = new, n + 1
        log.info("step %d t=%.4f newton=%d residual=%.2e", n, state.t, report.newton, report.history[-1])

        mass_err = abs(row.mass - expected_mass) / abs(ledger.rows[0].mass)
        margin = ledger.inequality_margin()[-1]
        checks["mass_drift"] = max(checks.get("mass_drift", 0.0), mass_err)
        checks["energy_margin"] = max(checks.get("energy_margin", -math.inf), margin)
        if mass_err > MASS_RTOL:
            result.ok, result.failure = False, {"step": n, "reason": "MASS_DRIFT", "detail": mass_err}
        elif row.min_rho <= 0:
            result.ok, result.failure = False, {"step": n, "reason": "POSITIVITY_LOST", "detail": row.min_rho}
        elif margin > n * slack:
            result.ok, result.failure = False, {"step": n, "reason": "ENERGY_INEQUALITY", "detail": margin}
        if write and cfg.vtk_every and n % cfg.vtk_every == 0:
            write_vtk(state, mesh, out / f"state_{n:04d}.vtk")

    result.steps = n
    result.final_state = state
    if sol.exact and len(ledger) > 1:
        pointwise = ledger.column("m1_functional") - ledger.column("grad_error_cum")
        result.sup_m1 = float(np.max(pointwise[1:]))
        result.grad_error = float(ledger.rows[-1].grad_error_cum)
        result.sup_rel_energy = float(np.nanmax(ledger.column("rel_energy")))
    result.wall_time = time.perf_counter() - t0
    if write:
        ledger.write_csv(out / "ledger.csv")
        (out / "summary.json").write_text(json.dumps(_jsonable(result.summary()), indent=2))
        if result.failure:
            (out / "failure.json").write_text(json.dumps(_jsonable(result.failure), indent=2))
    return result


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return None if not math.isfinite(obj) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


@dataclass
class StudyLevel:
    n: int
    h: float
    dt: float
    steps: int
    sup_m1: float
    grad_error: float
    error: float
    wall_time: float
    mass_drift: float = 0.0
    min_rho: float = math.nan
    energy_margin: float = math.nan


@dataclass
class StudyResult:
    levels: list
    eoc: list
    theoretical: float
    reproducible: bool

    def table(self) -> str:
        lines = [f"{'n':>4} {'h':>10} {'dt':>10} {'steps':>6} {'sup_rel':>12} {'grad_err':>12} "
                 f"{'error':>12} {'eoc':>7}"]
        for i, lv in enumerate(self.levels):
            order = f"{self.eoc[i - 1]:7.3f}" if i and self.eoc else "      -"
            lines.append(f"{lv.n:>4} {lv.h:10.4e} {lv.dt:10.4e} {lv.steps:>6} {lv.sup_m1:12.5e} "
                         f"{lv.grad_error:12.5e} {lv.error:12.5e} {order}")
        lines.append(f"theoretical exponent a = {self.theoretical:.4f}"
                     + ("  (errors at reproduction level: orders not meaningful)" if self.reproducible else ""))
        return "\n".join(lines)

    def as_dict(self) -> dict:
        return {"levels": [asdict(lv) for lv in self.levels], "eoc": self.eoc,
                "theoretical": self.theoretical, "reproducible": self.reproducible}


def convergence_study(base: RunConfig, levels=(2, 4, 8), dt_rule="h2", out_dir=None) -> StudyResult:
    """Run ``base`` on structured meshes ``levels`` and tabulate observed orders."""
    if len(levels) < 3:
        raise ValueError("a study needs at least three mesh levels")
    if dt_rule not in ("h", "h2"):
        raise ValueError("dt_rule must be h or h2")
    rows = []
    for n in levels:
        cfg = base.replace(mesh_n=n, mesh_file="", dt_rule=dt_rule, vtk_every=0)
        sub = Path(out_dir) / f"n{n}" if out_dir else None
        res = run(cfg, out_dir=sub, write=sub is not None)
        if not res.ok:
            raise RuntimeError(f"level n={n} failed: {res.failure}")
        rows.append(StudyLevel(n, res.h, res.dt, res.steps, res.sup_m1, res.grad_error,
                               res.error_functional, res.wall_time, res.checks.get("mass_drift", 0.0),
                               float(res.ledger.column("min_rho").min()),
                               float(res.ledger.inequality_margin().max())))
        log.info("level n=%d error %.4e (%.1fs)", n, res.error_functional, res.wall_time)
    errors = [lv.error for lv in rows]
    reproducible = max(errors) < 1e-10
    orders = [] if reproducible else dg.eoc(errors, [lv.h for lv in rows])
    a = dg.theoretical_exponent(base.law_gamma, base.variant, base.epsilon)
    result = StudyResult(rows, orders, a, reproducible)
    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "study.json").write_text(json.dumps(_jsonable(result.as_dict()), indent=2))
        (Path(out_dir) / "study.txt").write_text(result.table() + "\n")
    return result
