"""Simplex quadrature by collapsed Gauss-Jacobi products.

Rules live on the reference simplex ``{x_i >= 0, sum x_i <= 1}``; all
weights are positive and a rule of degree ``q`` integrates every
polynomial of total degree ``<= q`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
from scipy.special import roots_jacobi


@dataclass(frozen=True)
class Rule:
    points: np.ndarray  # (nq, dim) reference coordinates
    weights: np.ndarray  # (nq,), sum = reference measure
    degree: int

    @property
    def barycentric(self) -> np.ndarray:
        """(nq, dim+1) barycentric coordinates, vertex 0 at the origin."""
        return np.column_stack([1.0 - self.points.sum(axis=1), self.points])


@lru_cache(maxsize=None)
def simplex_rule(dim: int, degree: int) -> Rule:
    if dim not in (1, 2, 3):
        raise ValueError(f"unsupported dimension {dim}")
    m = max(1, (degree + 2) // 2)
    nodes, weights = [], []
    # direction k carries the Jacobian factor (1 - xi)^(dim - 1 - k)
    for k in range(dim):
        alpha = dim - 1 - k
        x, w = roots_jacobi(m, alpha, 0.0)
        nodes.append((1.0 + x) / 2.0)
        weights.append(w / 2.0 ** (alpha + 1))
    grids = np.meshgrid(*nodes, indexing="ij")
    wgrid = np.prod(np.meshgrid(*weights, indexing="ij"), axis=0).ravel()
    xi = np.column_stack([g.ravel() for g in grids])
    pts = np.empty_like(xi)
    remaining = np.ones(len(xi))
    for k in range(dim):
        pts[:, k] = remaining * xi[:, k]
        remaining = remaining * (1.0 - xi[:, k])
    rule = Rule(points=pts, weights=wgrid, degree=degree)
    rule.points.flags.writeable = False
    rule.weights.flags.writeable = False
    return rule


def tet_rule(degree: int = 3) -> Rule:
    return simplex_rule(3, degree)


def triangle_rule(degree: int = 3) -> Rule:
    return simplex_rule(2, degree)


def monomial_integral(alpha) -> float:
    """Exact integral of ``x**alpha`` over the reference simplex."""
    num = np.prod([factorial(a) for a in alpha])
    return float(num) / factorial(len(alpha) + sum(alpha))


def cell_points(mesh, degree: int = 3):
    """Physical quadrature points (nc, nq, 3) and weights (nc, nq) on cells."""
    rule = tet_rule(degree)
    p = mesh.vertices[mesh.cells]
    pts = p[:, None, 0] + np.einsum("qd,cdk->cqk", rule.points, p[:, 1:] - p[:, :1])
    w = 6.0 * mesh.cell_volume[:, None] * rule.weights[None, :]
    return pts, w


def face_points(mesh, degree: int = 3, faces=None):
    """Physical quadrature points (nf, nq, 3) and weights (nf, nq) on faces."""
    rule = triangle_rule(degree)
    idx = np.arange(mesh.n_faces) if faces is None else np.asarray(faces)
    p = mesh.vertices[mesh.faces[idx]]
    pts = p[:, None, 0] + np.einsum("qd,fdk->fqk", rule.points, p[:, 1:] - p[:, :1])
    w = 2.0 * mesh.face_area[idx, None] * rule.weights[None, :]
    return pts, w
