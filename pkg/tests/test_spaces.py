import numpy as np
import pytest

from crupwind.checks import norm_ratios
from crupwind.mesh import build_structured_cube
from crupwind.quadrature import cell_points, face_points, tet_rule
from crupwind.spaces import (CellField, CRField, broken_div, broken_grad, broken_norms,
                             divergence_projection_check, jump, project_CR, project_Q)

A = np.array([[1.0, -2.0, 0.5], [0.3, 0.0, 1.0], [-1.0, 2.0, 0.25]])
b = np.array([0.1, -0.2, 0.3])


def affine(x):
    return x @ A.T + b


def test_project_Q_constant_and_affine(cube2):
    assert np.allclose(project_Q(lambda x: np.full(x.shape[:-1], 2.5), cube2), 2.5)
    f = lambda x: 1.0 + 2 * x[..., 0] - x[..., 2]
    c = cube2.cell_centroid
    assert np.allclose(project_Q(f, cube2), f(c), atol=1e-14)


def test_project_Q_quadratic_oracle(cube1):
    pts, w = cell_points(cube1, 5)
    ref = (w * pts[..., 0] ** 2).sum(1) / cube1.cell_volume
    assert np.allclose(project_Q(lambda x: x[..., 0] ** 2, cube1), ref, rtol=0, atol=1e-12)


def test_p1_reproduction(cube2):
    v = project_CR(affine, cube2, zero_trace=False)
    rule = tet_rule(3)
    pts, _ = cell_points(cube2, 3)
    assert np.allclose(v.evaluate(rule.barycentric), affine(pts), atol=1e-13)
    assert np.allclose(broken_grad(v), A, atol=1e-12)
    assert np.allclose(broken_div(v), np.trace(A), atol=1e-12)


def test_constant_has_zero_gradient(cube2):
    v = CRField(cube2, np.tile([1.0, 2.0, 3.0], (cube2.n_faces, 1)), zero_trace=False)
    assert np.allclose(broken_grad(v), 0.0)


def test_zero_trace_projection_differs_only_on_boundary_cells():
    mesh = build_structured_cube(4)
    f = lambda x: np.sin(np.pi * x).prod(axis=-1)[..., None] * np.ones(3)
    full = project_CR(f, mesh, zero_trace=False)
    zero = project_CR(f, mesh, zero_trace=True)
    differs = np.abs(full.cell_dofs() - zero.cell_dofs()).max(axis=(1, 2)) > 0
    touches = np.isin(mesh.cell_faces, mesh.boundary_faces).any(axis=1)
    assert not np.any(differs & ~touches)


def test_face_means_preserved(cube2):
    f = lambda x: np.stack([np.sin(x[..., 0]), 0 * x[..., 0], 0 * x[..., 0]], axis=-1)
    v = project_CR(f, cube2, zero_trace=False)
    pts, w = face_points(cube2, 8)
    ref = np.einsum("fq,fq->f", w, np.sin(pts[..., 0]))
    assert np.allclose(v.values[:, 0] * cube2.face_area, ref, atol=1e-14)


def test_broken_grad_matches_finite_differences(cube2, rng):
    v = CRField.from_interior(cube2, rng.normal(size=(cube2.n_interior, 3)))
    # evaluate the affine piece of cell 5 at its centroid by barycentric coordinates
    c = 5
    X = cube2.vertices[cube2.cells[c]]
    T = np.vstack([np.ones(4), X.T])

    def value(x):
        lam = np.linalg.solve(T, np.concatenate([[1.0], x]))
        return (1 - 3 * lam) @ v.cell_dofs()[c]

    x0 = X.mean(axis=0)
    h = 1e-4
    G = np.column_stack([(value(x0 + h * e) - value(x0 - h * e)) / (2 * h) for e in np.eye(3)])
    assert np.allclose(broken_grad(v)[c], G, atol=1e-8)


def test_divergence_projection(cube2, rng):
    ones = np.ones(cube2.n_cells)
    lhs, rhs = divergence_projection_check(ones, affine, cube2, div_v=lambda x: np.full(x.shape[:-1], np.trace(A)))
    assert lhs == pytest.approx(rhs, abs=1e-12) and rhs == pytest.approx(np.trace(A))
    q = rng.normal(size=cube2.n_cells)
    quad = lambda x: np.stack([x[..., 0] * x[..., 1], x[..., 2] ** 2, x[..., 0] * x[..., 2]], axis=-1)
    lhs, rhs = divergence_projection_check(q, quad, cube2, div_v=lambda x: x[..., 1] + x[..., 0])
    assert abs(lhs - rhs) <= 1e-11
    # curl of (0, 0, x y^2) = (2 x y, -y^2, 0) is divergence free
    curl = lambda x: np.stack([2 * x[..., 0] * x[..., 1], -x[..., 1] ** 2, 0 * x[..., 0]], axis=-1)
    lhs, _ = divergence_projection_check(q, curl, cube2)
    assert abs(lhs) <= 1e-11


def test_cell_jump(cube2):
    f = cube2.interior_faces[3]
    K, L = cube2.face_cells[f]
    vals = np.zeros(cube2.n_cells)
    vals[K] = 1.0
    assert jump(CellField(cube2, vals), face=f) == 1.0
    assert jump(CellField(cube2, vals), face=f, normal_choice=-1) == -1.0


def test_cr_jump_mean_zero_and_antisymmetry(cube2, rng):
    from crupwind.quadrature import triangle_rule
    v = CRField.from_interior(cube2, rng.normal(size=(cube2.n_interior, 3)))
    w = triangle_rule(3).weights
    J = jump(v)[cube2.interior_faces]
    assert np.abs(np.einsum("q,fqk->fk", w, J)).max() <= 1e-13
    assert np.allclose(jump(v, normal_choice=-1)[cube2.interior_faces], -J)
    with pytest.raises(ValueError):
        jump(v, normal_choice=0)


def test_norms_of_zero(cube1):
    norms = broken_norms(CRField(cube1, np.zeros((cube1.n_faces, 3))))
    assert all(v == 0 for v in norms.values())


def test_l2_norm_matches_quadrature(cube2, rng):
    v = CRField.from_interior(cube2, rng.normal(size=(cube2.n_interior, 3)))
    rule = tet_rule(4)
    vals = v.evaluate(rule.barycentric)
    ref = np.sqrt((6 * cube2.cell_volume[:, None] * rule.weights * (vals ** 2).sum(-1)).sum())
    assert broken_norms(v)["L2"] == pytest.approx(ref, rel=1e-12)


def test_norm_ratios_bounded_across_refinement():
    r = norm_ratios((1, 2, 4))
    face = [r[n]["face2/L2^2"] for n in (1, 2, 4)]
    lo, hi = min(f[0] for f in face), max(f[1] for f in face)
    assert 1.0 < lo and hi < 20.0 and hi / lo < 2.0
    sob = [r[n]["L6/H1"][1] for n in (1, 2, 4)]
    assert max(sob) < 1.0


def test_field_validation(cube1):
    with pytest.raises(ValueError):
        CRField(cube1, np.ones((cube1.n_faces, 3)), zero_trace=True)
    with pytest.raises(ValueError):
        CellField(cube1, np.ones(3))
