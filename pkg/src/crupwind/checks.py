"""Invariant suite behind ``crupwind check``.

Each check compares a library computation against an independent
reimplementation or an exact identity and returns a ``CheckResult``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import build_structured_cube
from .scheme import Scheme, SchemeConfig, Variant, viscous_matrix
from .spaces import CRField, broken_norms, divergence_projection_check, jump, project_CR
from .thermo import make_law


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: {self.value:.3e} (tol {self.tolerance:.1e}) {self.detail}".rstrip()


def _rel(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(np.abs(b).max(), 1e-300)
    return float(np.abs(a - b).max() / scale)


def _split_by_cases(a, delta):
    """``(A+, A-)`` by explicit case analysis, one face at a time."""
    if delta == 0.0:
        return (a, 0.0) if a > 0 else (0.0, a)
    if a >= delta:
        return a, 0.0
    if a <= -delta:
        return 0.0, a
    return 0.5 * (a + delta), 0.5 * (a - delta)


def brute_force_convection(mesh, rho_prev, m_prev, rho, u_int, dt, variant, epsilon):
    """Mass residual (no sources) and momentum cell terms by a per-face loop."""
    delta = mesh.h ** (1.0 - epsilon)
    use_delta = delta if variant is Variant.MODIFIED_UPWIND else 0.0
    stab = delta if variant is Variant.STABILIZED else 0.0
    u = np.zeros((mesh.n_faces, 3))
    u[mesh.interior_faces] = u_int
    uhat = u[mesh.cell_faces].mean(axis=1)
    mass = mesh.cell_volume * (rho - rho_prev) / dt
    mom = (mesh.cell_volume / dt)[:, None] * (rho[:, None] * uhat - m_prev)
    for f in mesh.interior_faces:
        K, L = mesh.face_cells[f]
        n, area = mesh.face_normal[f], mesh.face_area[f]
        Ap, Am = _split_by_cases(float(u[f] @ n), use_delta)
        F = rho[K] * Ap + rho[L] * Am + stab * (rho[K] - rho[L])
        G = rho[K] * uhat[K] * Ap + rho[L] * uhat[L] * Am + stab * (rho[K] - rho[L]) * 0.5 * (uhat[K] + uhat[L])
        mass[K] += area * F
        mass[L] -= area * F
        mom[K] += area * G
        mom[L] -= area * G
    return mass, mom


def check_convection_oracle(n=1, seed=0, tol=1e-12) -> list[CheckResult]:
    mesh = build_structured_cube(n)
    rng = np.random.default_rng(seed)
    law = make_law(1.0, 1.0, 2.0)
    out = []
    for variant in Variant:
        worst = 0.0
        for _ in range(5):
            rho_prev = rng.uniform(0.5, 2.0, mesh.n_cells)
            rho = rng.uniform(0.5, 2.0, mesh.n_cells)
            u_prev = rng.normal(size=(mesh.n_interior, 3))
            u_int = rng.normal(size=(mesh.n_interior, 3))
            s = Scheme(mesh, law, SchemeConfig(dt=0.1, mu=1.0, variant=variant, epsilon=0.5))
            s.set_previous(rho_prev, u_prev)
            x = np.concatenate([rho, u_int.ravel()])
            m_ref, w_ref = brute_force_convection(mesh, rho_prev, s.m_prev, rho, u_int, 0.1, variant, 0.5)
            worst = max(worst, _rel(s.mass_residual(x), m_ref), _rel(s.momentum_cell_terms(rho, u_int.ravel()), w_ref))
        out.append(CheckResult(f"convection oracle ({variant.value}, n={n})", worst <= tol, worst, tol))
    return out


def dense_viscous(mesh, mu):
    """Dense viscous matrix on interior dofs from barycentric gradients."""
    nf = mesh.n_faces
    A = np.zeros((3 * nf, 3 * nf))
    for c, verts in enumerate(mesh.cells):
        T = np.hstack([np.ones((4, 1)), mesh.vertices[verts]])
        grad_lam = np.linalg.inv(T)[1:].T  # row i: grad lambda_i
        vol = abs(np.linalg.det(T)) / 6.0
        # local face i is opposite vertex i, so its shape function is 1 - 3 lambda_i
        grads = -3.0 * grad_lam
        faces = mesh.cell_faces[c]
        for a in range(4):
            for b in range(4):
                for i in range(3):
                    for j in range(3):
                        val = mu / 3.0 * vol * grads[a, i] * grads[b, j]
                        if i == j:
                            val += mu * vol * grads[a] @ grads[b]
                        A[3 * faces[a] + i, 3 * faces[b] + j] += val
    keep = (3 * mesh.interior_faces[:, None] + np.arange(3)).ravel()
    return A[np.ix_(keep, keep)]


def check_viscous_oracle(n=1, mu=0.7, tol=1e-10) -> CheckResult:
    mesh = build_structured_cube(n)
    err = _rel(viscous_matrix(mesh, mu).toarray(), dense_viscous(mesh, mu))
    return CheckResult(f"viscous block vs dense assembly (n={n})", err <= tol, err, tol)


def _quadratic(x):
    x0, x1, x2 = x[..., 0], x[..., 1], x[..., 2]
    return np.stack([x0 * x1 + x2 ** 2, 1.0 + x1 * x1 - x0 * x2, 0.5 * x0 + x1 * x2], axis=-1)


def _quadratic_div(x):
    return x[..., 1] + 2 * x[..., 1] + x[..., 1]


def check_divergence_projection(n=2, seed=1, tol=1e-11) -> CheckResult:
    mesh = build_structured_cube(n)
    q = np.random.default_rng(seed).normal(size=mesh.n_cells)
    lhs, rhs = divergence_projection_check(q, _quadratic, mesh, div_v=_quadratic_div)
    err = abs(lhs - rhs) / max(abs(rhs), 1.0)
    return CheckResult(f"divergence projection identity (n={n})", err <= tol, err, tol)


def check_p1_reproduction(n=2, tol=1e-12) -> CheckResult:
    mesh = build_structured_cube(n)
    A = np.array([[1.0, -2.0, 0.5], [0.3, 0.0, 1.0], [-1.0, 2.0, 0.25]])
    b = np.array([0.1, -0.2, 0.3])
    v = project_CR(lambda x: x @ A.T + b, mesh, zero_trace=False)
    pts = mesh.cell_centroid
    err = _rel(v.cell_means(), pts @ A.T + b)
    from .spaces import broken_grad
    err = max(err, _rel(broken_grad(v), np.broadcast_to(A, (mesh.n_cells, 3, 3))))
    return CheckResult(f"P1 reproduction (n={n})", err <= tol, err, tol)


def check_jump_mean(n=2, seed=2, tol=1e-13) -> CheckResult:
    mesh = build_structured_cube(n)
    rng = np.random.default_rng(seed)
    v = CRField.from_interior(mesh, rng.normal(size=(mesh.n_interior, 3)))
    from .quadrature import triangle_rule
    w = triangle_rule(3).weights
    jumps = jump(v)[mesh.interior_faces]
    means = np.einsum("q,fqk->fk", w, jumps) / w.sum()
    err = float(np.abs(means).max() / np.abs(v.values).max())
    return CheckResult(f"interior jump means vanish (n={n})", err <= tol, err, tol)


def norm_ratios(levels=(1, 2, 4), samples=5, seed=3) -> dict:
    """Extreme ratios L2/H1, L6/H1 and face_2/L2^2 over random zero-trace fields."""
    rng = np.random.default_rng(seed)
    out = {}
    for n in levels:
        mesh = build_structured_cube(n)
        r = {"L2/H1": [], "L6/H1": [], "face2/L2^2": []}
        for _ in range(samples):
            v = CRField.from_interior(mesh, rng.normal(size=(mesh.n_interior, 3)))
            nm = broken_norms(v)
            r["L2/H1"].append(nm["L2"] / nm["H1"])
            r["L6/H1"].append(nm["L6"] / nm["H1"])
            r["face2/L2^2"].append(nm["face_2"] / nm["L2"] ** 2)
        out[n] = {k: (min(v), max(v)) for k, v in r.items()}
    return out


def check_norm_equivalence(levels=(1, 2, 4), bound=20.0) -> CheckResult:
    """Sobolev and Poincare ratios stay below ``bound``; the face norm stays within a factor ``bound`` of L2."""
    ratios = norm_ratios(levels)
    upper = max(per[k][1] for per in ratios.values() for k in ("L2/H1", "L6/H1"))
    lo = min(per["face2/L2^2"][0] for per in ratios.values())
    hi = max(per["face2/L2^2"][1] for per in ratios.values())
    worst = max(upper, hi, 1.0 / lo)
    return CheckResult(f"norm equivalence ratios (n in {tuple(levels)})", worst <= bound, worst, bound,
                       f"face/L2 range [{lo:.3g}, {hi:.3g}], sobolev max {upper:.3g}")


def interface_state(n):
    """Density with a jump across x1 = 1/2 and velocity tangential to it."""
    mesh = build_structured_cube(n)
    rho = 1.0 + 0.5 * (mesh.cell_centroid[:, 0] < 0.5)

    def V(x):
        s = np.sin(np.pi * x)
        B = s.prod(axis=-1)
        return np.stack([0.0 * B, B, -B], axis=-1)

    return mesh, rho, project_CR(V, mesh)


def flux_gap(n, epsilon) -> tuple[float, float]:
    """``(h, max_sigma |F_mod - F_std|)`` of the mass flux on the interface state."""
    mesh, rho, u = interface_state(n)
    law = make_law(1.0, 1.0, 2.0)
    fluxes = []
    for variant in (Variant.STANDARD, Variant.MODIFIED_UPWIND):
        s = Scheme(mesh, law, SchemeConfig(dt=1.0, mu=1.0, variant=variant, epsilon=epsilon))
        fluxes.append(s.mass_flux(rho, u.interior.ravel()))
    return mesh.h, float(np.abs(fluxes[1] - fluxes[0]).max())


def flux_slope(epsilon, levels=(2, 4, 8)) -> float:
    hs, gaps = zip(*(flux_gap(n, epsilon) for n in levels))
    return float(np.polyfit(np.log(hs), np.log(gaps), 1)[0])


def check_flux_consistency(epsilon, levels=(2, 4, 8), tol=0.15) -> CheckResult:
    slope = flux_slope(epsilon, levels)
    err = abs(slope - (1.0 - epsilon))
    return CheckResult(f"modified upwind flux gap slope (eps={epsilon})", err <= tol, err, tol,
                       f"slope {slope:.4f} vs {1 - epsilon:.2f}")


def check_short_runs(n=2, steps=3) -> list[CheckResult]:
    """Mass, positivity and energy margin of short source-free runs."""
    from .config import RunConfig
    from .runner import run

    out = []
    for variant in Variant:
        cfg = RunConfig(mesh_n=n, solution="pulse", variant=variant.value, epsilon=0.5 if variant is not
                        Variant.STANDARD else 0.0, dt=0.02, t_end=0.02 * steps, mu=0.5)
        res = run(cfg, write=False)
        margin = float(res.ledger.inequality_margin().max())
        slack = steps * 10 * cfg.solver_tol
        ok = res.ok and res.checks["mass_drift"] <= 1e-11 and margin <= slack
        out.append(CheckResult(f"short pulse run ({variant.value}, n={n})", ok, res.checks.get("mass_drift", np.nan),
                               1e-11, f"energy margin {margin:.2e}, min rho {res.ledger.column('min_rho').min():.3f}"))
    return out


def run_all(quick=False) -> list[CheckResult]:
    results = check_convection_oracle(1) + [
        check_viscous_oracle(1),
        check_divergence_projection(),
        check_p1_reproduction(),
        check_jump_mean(),
        check_norm_equivalence(),
        check_flux_consistency(0.0),
        check_flux_consistency(0.5),
    ]
    if not quick:
        results += check_convection_oracle(2, seed=5) + check_short_runs()
    return results
