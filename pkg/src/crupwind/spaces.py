"""Piecewise constants and Crouzeix-Raviart vector fields on a tetrahedral mesh.

A CR field stores one vector per face, the face mean.  On a cell the field
is the affine function ``sum_i v_{sigma_i} (1 - 3 lambda_i)``, where face
``sigma_i`` is opposite vertex ``i`` and ``lambda_i`` is its barycentric
coordinate.  The gradient of that shape function is ``|sigma| n_{sigma,K} / |K|``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh
from .quadrature import cell_points, face_points, tet_rule, triangle_rule


@dataclass(frozen=True, eq=False)
class CellField:
    """Piecewise constant scalar (or vector, shape (nc, 3)) field."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape[0] != self.mesh.n_cells:
            raise ValueError(f"expected {self.mesh.n_cells} cell values, got {v.shape[0]}")
        if not np.all(np.isfinite(v)):
            raise ValueError("cell values must be finite")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class CRField:
    """Crouzeix-Raviart vector field, face means of shape (nf, 3)."""

    mesh: Mesh
    values: np.ndarray
    zero_trace: bool = True

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.mesh.n_faces, 3):
            raise ValueError(f"expected shape {(self.mesh.n_faces, 3)}, got {v.shape}")
        if self.zero_trace and np.any(v[self.mesh.boundary_faces] != 0.0):
            raise ValueError("zero-trace field has nonzero boundary face values")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_interior(cls, mesh: Mesh, interior_values) -> "CRField":
        v = np.zeros((mesh.n_faces, 3))
        v[mesh.interior_faces] = np.asarray(interior_values).reshape(-1, 3)
        return cls(mesh, v, zero_trace=True)

    @property
    def interior(self) -> np.ndarray:
        return self.values[self.mesh.interior_faces]

    def cell_dofs(self) -> np.ndarray:
        """(nc, 4, 3) face values in local-face order."""
        return self.values[self.mesh.cell_faces]

    def cell_means(self) -> np.ndarray:
        """``Pi^Q`` of the field: the value at each centroid, mean of the 4 DOFs."""
        return self.cell_dofs().mean(axis=1)

    def evaluate(self, bary) -> np.ndarray:
        """Values at barycentric points ``bary`` of shape (nq, 4), per cell: (nc, nq, 3)."""
        shape = 1.0 - 3.0 * np.asarray(bary)
        return np.einsum("qi,cik->cqk", shape, self.cell_dofs())


def shape_gradients(mesh: Mesh) -> np.ndarray:
    """(nc, 4, 3) gradients of the four CR basis functions per cell."""
    area = mesh.face_area[mesh.cell_faces][..., None]
    return area * mesh.cell_face_normals() / mesh.cell_volume[:, None, None]


def project_Q(f, mesh: Mesh, degree: int = 3) -> np.ndarray:
    """Cell means of ``f`` (scalar or vector valued) by cell quadrature."""
    pts, w = cell_points(mesh, degree)
    vals = np.asarray(f(pts), dtype=float)
    if vals.ndim == 2:
        return (vals * w).sum(axis=1) / mesh.cell_volume
    return np.einsum("cq,cq...->c...", w, vals) / mesh.cell_volume[:, None]


def project_CR(f, mesh: Mesh, zero_trace: bool = True, degree: int = 3) -> CRField:
    """Face means of the vector field ``f``; boundary faces zeroed if ``zero_trace``."""
    pts, w = face_points(mesh, degree)
    vals = np.asarray(f(pts), dtype=float)
    v = np.einsum("fq,fqk->fk", w, vals) / mesh.face_area[:, None]
    if zero_trace:
        v[mesh.boundary_faces] = 0.0
    return CRField(mesh, v, zero_trace=zero_trace)


def broken_grad(v: CRField) -> np.ndarray:
    """Cellwise gradient, (nc, 3, 3) with ``G[K, i, j] = d v_i / d x_j``."""
    return np.einsum("cak,caj->ckj", v.cell_dofs(), shape_gradients(v.mesh))


def broken_div(v: CRField) -> np.ndarray:
    return np.einsum("cak,cak->c", v.cell_dofs(), shape_gradients(v.mesh))


def divergence_projection_check(q, v, mesh: Mesh, div_v=None, degree: int = 3):
    """Return ``(sum_K int_K q div Pi_h[v], int q div v)``.

    Without ``div_v`` the divergence is taken by central differences,
    which is exact for quadratic ``v`` up to round-off.
    """
    q = np.asarray(q, dtype=float)
    vh = project_CR(v, mesh, zero_trace=False, degree=degree)
    lhs = float(np.dot(q, mesh.cell_volume * broken_div(vh)))
    if div_v is None:
        def div_v(x, step=1e-3):
            out = np.zeros(x.shape[:-1])
            for d in range(3):
                e = np.zeros(3)
                e[d] = step
                out += (v(x + e)[..., d] - v(x - e)[..., d]) / (2 * step)
            return out
    pts, w = cell_points(mesh, degree)
    rhs = float(np.dot(q, (w * div_v(pts)).sum(axis=1)))
    return lhs, rhs


def face_traces(v: CRField, degree: int = 3):
    """One-sided traces at face quadrature points.

    Returns ``(owner, neighbour)`` arrays of shape (nf, nq, 3); the neighbour
    trace of a boundary face is zero.
    """
    mesh = v.mesh
    rule = triangle_rule(degree)
    nq = len(rule.weights)
    dofs = v.cell_dofs()
    traces = []
    for side in (0, 1):
        out = np.zeros((mesh.n_faces, nq, 3))
        faces = np.arange(mesh.n_faces) if side == 0 else mesh.interior_faces
        cells = mesh.face_cells[faces, side]
        # barycentric coordinates of the face points within the cell
        fv = mesh.faces[faces]  # sorted global vertex triple
        cv = mesh.cells[cells]  # (m, 4)
        bary = np.zeros((len(faces), nq, 4))
        face_bary = rule.barycentric  # (nq, 3) w.r.t. fv order
        for j in range(3):
            col = np.argmax(cv == fv[:, j:j + 1], axis=1)
            bary[np.arange(len(faces)), :, col] += face_bary[None, :, j]
        shape = 1.0 - 3.0 * bary
        out[faces] = np.einsum("fqi,fik->fqk", shape, dofs[cells])
        traces.append(out)
    return traces[0], traces[1]


def jump(v, face: int | None = None, normal_choice: int = 1, degree: int = 3):
    """Jump ``v|_K - v|_L`` across faces, with ``n_sigma = n_{sigma,K}``.

    For a ``CRField`` the result holds values at face quadrature points,
    (nf, nq, 3); for a ``CellField`` one value per face.  On boundary faces the jump is
    the trace itself.  ``normal_choice=-1`` reverses the reference normal,
    which negates interior jumps.  Pass ``face`` to get a single face.
    """
    mesh = v.mesh
    if isinstance(v, CRField):
        own, nbr = face_traces(v, degree)
        out = own - nbr
    else:
        K, L = mesh.face_cells.T
        out = v.values[K].copy()
        interior = mesh.interior_faces
        out[interior] -= v.values[L[interior]]
    if normal_choice == -1:
        out = out.copy()
        out[mesh.interior_faces] *= -1.0
    elif normal_choice != 1:
        raise ValueError("normal_choice must be +1 or -1")
    return out if face is None else out[face]


def mass_matrix_local():
    """CR mass matrix on the reference cell divided by |K|: M_ij = int phi_i phi_j / |K|."""
    # phi_i = 1 - 3 lambda_i; int lambda_i lambda_j = |K| (1 + delta_ij) / 20
    lam2 = (np.ones((4, 4)) + np.eye(4)) / 20.0
    return 1.0 - 3.0 * 0.25 - 3.0 * 0.25 + 9.0 * lam2


def broken_norms(v: CRField) -> dict:
    """Norms of a CR field, all exact for the piecewise affine representation.

    ``face_p`` entries are ``sum_sigma |sigma| h |v_sigma|^p`` for p = 1, 2, 6.
    """
    mesh = v.mesh
    dofs = v.cell_dofs()
    l2 = float(np.einsum("c,ab,cak,cbk->", mesh.cell_volume, mass_matrix_local(), dofs, dofs))
    rule = tet_rule(6)
    vals = v.evaluate(rule.barycentric)
    l6 = float((6.0 * mesh.cell_volume[:, None] * rule.weights * (vals ** 2).sum(-1) ** 3).sum()) ** (1 / 6)
    grad = broken_grad(v)
    h1 = float(np.einsum("c,cij,cij->", mesh.cell_volume, grad, grad))
    mag = np.linalg.norm(v.values, axis=1)
    weight = mesh.face_area * mesh.h
    out = {"L2": np.sqrt(max(l2, 0.0)), "L6": l6, "H1": np.sqrt(h1)}
    for p in (1, 2, 6):
        out[f"face_{p}"] = float((weight * mag ** p).sum())
    return out
