import numpy as np
import pytest

from crupwind.mesh import build_structured_cube
from crupwind.solutions import boundary_velocity_defect, builtin_solutions
from crupwind.thermo import make_law

LAW = make_law(1.0, 1.0, 2.0)
MU = 0.7
CAT = builtin_solutions()


def test_catalogue():
    assert {"rest", "mms1", "pulse"} <= set(CAT)
    assert not CAT["pulse"].exact


def test_rest_sources_vanish(rng):
    x = rng.uniform(0, 1, (10, 3))
    src = CAT["rest"].sources(LAW, MU)
    assert np.all(src.mass(0.4, x) == 0)
    assert np.all(src.momentum(0.4, x) == 0)


def test_mms1_initial_data(rng):
    x = rng.uniform(0, 1, (10, 3))
    assert np.allclose(CAT["mms1"].r(0.0, x), 1.0)
    assert np.allclose(CAT["mms1"].V(0.0, x), 0.0)


def _fd(f, t, x, h=1e-5):
    dt = (f(t + h, x) - f(t - h, x)) / (2 * h)
    grads = [(f(t, x + h * e) - f(t, x - h * e)) / (2 * h) for e in np.eye(3)]
    return dt, np.stack(grads, axis=-1)


def test_mms1_sources_match_finite_differences(rng):
    # PDE residuals rebuilt from central differences of r and V only
    sol = CAT["mms1"]
    pts = rng.uniform(0, 1, (20, 3))
    times = rng.uniform(0.1, 2.0, 20)
    for t, x in zip(times, pts):
        x = x[None]
        r_t, r_x = _fd(sol.r, t, x)
        m = lambda tt, xx: sol.r(tt, xx)[..., None] * sol.V(tt, xx)
        div_m = sum(_fd(lambda tt, xx, i=i: m(tt, xx)[..., i], t, x)[1][..., i] for i in range(3))
        g = r_t + div_m
        flux = lambda tt, xx: m(tt, xx)[..., :, None] * sol.V(tt, xx)[..., None, :]
        m_t = _fd(m, t, x)[0]
        div_flux = sum(_fd(lambda tt, xx, j=j: flux(tt, xx)[..., :, j], t, x)[1][..., j] for j in range(3))
        p_x = _fd(lambda tt, xx: LAW.p(sol.r(tt, xx)), t, x)[1]
        h = 1e-4
        lap = sum((sol.V(t, x + h * e) - 2 * sol.V(t, x) + sol.V(t, x - h * e)) / h ** 2 for e in np.eye(3))
        div = lambda xx: sum(_fd(lambda tt, y, i=i: sol.V(tt, y)[..., i], t, xx)[1][..., i] for i in range(3))
        grad_div = np.stack([(div(x + h * e) - div(x - h * e)) / (2 * h) for e in np.eye(3)], axis=-1)
        f = m_t + div_flux + p_x - MU * lap - MU / 3 * grad_div
        g_lib = sol.mass_source(t, x)
        f_lib = sol.momentum_source(t, x, LAW, MU)
        assert np.abs(g_lib - g).max() <= 1e-6 * max(1.0, np.abs(g).max())
        assert np.abs(f_lib - f).max() <= 1e-6 * max(1.0, np.abs(f).max())


def test_analytic_derivatives(rng):
    sol = CAT["mms1"]
    x = rng.uniform(0, 1, (5, 3))
    t = 0.8
    r_t, r_x = _fd(sol.r, t, x)
    assert np.allclose(sol.dr_dt(t, x), r_t, atol=1e-8)
    assert np.allclose(sol.grad_r(t, x), r_x, atol=1e-8)
    V_t, V_x = _fd(sol.V, t, x)
    assert np.allclose(sol.dV_dt(t, x), V_t, atol=1e-8)
    assert np.allclose(sol.grad_V(t, x), V_x, atol=1e-8)


def test_density_bounded_below(rng):
    x = rng.uniform(0, 1, (200, 3))
    for t in np.linspace(0, 5, 11):
        assert CAT["mms1"].r(t, x).min() >= 0.75


@pytest.mark.parametrize("name", ["rest", "mms1", "pulse"])
def test_boundary_compatibility(name):
    assert boundary_velocity_defect(CAT[name], build_structured_cube(3)) <= 1e-12
