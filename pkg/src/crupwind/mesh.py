"""Conforming tetrahedral meshes with oriented faces.

Faces are stored once, with the unit normal pointing out of the owner cell
(the lower-indexed of the two incident cells).  Local face ``i`` of a cell
is the face opposite its local vertex ``i``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

BOUNDARY = -1


class MeshError(ValueError):
    """Raised when a mesh violates one of the structural invariants."""


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray  # (nv, 3)
    cells: np.ndarray  # (nc, 4) vertex indices
    faces: np.ndarray  # (nf, 3) sorted vertex triples
    face_cells: np.ndarray  # (nf, 2) owner, neighbour or BOUNDARY
    face_area: np.ndarray  # (nf,)
    face_normal: np.ndarray  # (nf, 3) unit, outward from owner
    cell_faces: np.ndarray  # (nc, 4) face opposite local vertex i
    cell_face_sign: np.ndarray  # (nc, 4) +1 owner, -1 neighbour
    cell_volume: np.ndarray
    cell_diameter: np.ndarray
    cell_inradius: np.ndarray
    h: float
    # derived index sets, filled in __post_init__
    interior_faces: np.ndarray = field(init=False, repr=False)
    boundary_faces: np.ndarray = field(init=False, repr=False)
    interior_index: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        interior = np.flatnonzero(self.face_cells[:, 1] != BOUNDARY)
        index = np.full(len(self.faces), -1, dtype=np.int64)
        index[interior] = np.arange(len(interior))
        object.__setattr__(self, "interior_faces", interior)
        object.__setattr__(self, "boundary_faces", np.flatnonzero(self.face_cells[:, 1] == BOUNDARY))
        object.__setattr__(self, "interior_index", index)
        for arr in (self.vertices, self.cells, self.faces, self.face_cells, self.face_area,
                    self.face_normal, self.cell_faces, self.cell_face_sign, self.cell_volume,
                    self.cell_diameter, self.cell_inradius, interior, index):
            arr.flags.writeable = False

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_interior(self) -> int:
        return len(self.interior_faces)

    @property
    def cell_centroid(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    @property
    def face_centroid(self) -> np.ndarray:
        return self.vertices[self.faces].mean(axis=1)

    def cell_face_normals(self) -> np.ndarray:
        """Outward unit normals ``n_{sigma,K}`` per cell, shape (nc, 4, 3)."""
        return self.face_normal[self.cell_faces] * self.cell_face_sign[..., None]

    def closure_defect(self) -> np.ndarray:
        """Per-cell ``sum_sigma |sigma| n_{sigma,K}``; zero for a closed cell."""
        area = self.face_area[self.cell_faces][..., None]
        return (area * self.cell_face_normals()).sum(axis=1)

    def total_volume(self) -> float:
        return float(self.cell_volume.sum())


def _signed_volumes(vertices, cells):
    p = vertices[cells]
    return np.einsum("ij,ij->i", p[:, 1] - p[:, 0], np.cross(p[:, 2] - p[:, 0], p[:, 3] - p[:, 0])) / 6.0


def from_arrays(vertices, cells) -> Mesh:
    """Build the face structure and geometry of a tetrahedral mesh.

    Cells may come in either orientation.  Raises ``MeshError`` for
    degenerate cells, non-manifold faces or unused vertices.
    """
    vertices = np.ascontiguousarray(vertices, dtype=float)
    cells = np.ascontiguousarray(cells, dtype=np.int64)
    if vertices.ndim != 2 or vertices.shape[1] != 3:
        raise MeshError("vertices must have shape (nv, 3)")
    if cells.ndim != 2 or cells.shape[1] != 4 or len(cells) == 0:
        raise MeshError("no tetrahedra")
    if cells.min() < 0 or cells.max() >= len(vertices):
        raise MeshError("cell references a vertex that does not exist")
    if np.any(np.sort(cells, axis=1)[:, 1:] == np.sort(cells, axis=1)[:, :-1]):
        bad = int(np.flatnonzero((np.diff(np.sort(cells, axis=1), axis=1) == 0).any(axis=1))[0])
        raise MeshError(f"cell {bad} repeats a vertex")

    vol = _signed_volumes(vertices, cells)
    # the mesh is invariant under renumbering, so orient every cell positively
    flip = vol < 0
    cells = cells.copy()
    cells[flip, 2], cells[flip, 3] = cells[flip, 3], cells[flip, 2].copy()
    vol = np.abs(vol)
    scale = max(np.ptp(vertices, axis=0).max(), 1.0) ** 3
    if np.any(vol <= 1e-14 * scale):
        raise MeshError(f"cell {int(np.argmin(vol))} has zero volume")

    nc = len(cells)
    opposite = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
    local = np.sort(cells[:, opposite], axis=2).reshape(-1, 3)  # (4 nc, 3)
    faces, inverse, counts = np.unique(local, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    if counts.max() > 2:
        f = int(np.argmax(counts))
        owners = sorted({int(i) // 4 for i in np.flatnonzero(inverse == f)})
        raise MeshError(f"face {tuple(int(v) for v in faces[f])} is shared by {counts[f]} cells {owners}")

    cell_faces = inverse.reshape(nc, 4)
    nf = len(faces)
    face_cells = np.full((nf, 2), BOUNDARY, dtype=np.int64)
    # stable order: first occurrence in cell order becomes owner
    order = np.argsort(inverse, kind="stable")
    sorted_faces = inverse[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = sorted_faces[1:] != sorted_faces[:-1]
    face_cells[sorted_faces[first], 0] = order[first] // 4
    face_cells[sorted_faces[~first], 1] = order[~first] // 4

    used = np.zeros(len(vertices), dtype=bool)
    used[cells.ravel()] = True
    if not used.all():
        raise MeshError(f"vertex {int(np.flatnonzero(~used)[0])} is not used by any cell")

    p = vertices[faces]
    normal = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    area = 0.5 * np.linalg.norm(normal, axis=1)
    if np.any(area <= 0):
        raise MeshError(f"face {int(np.argmin(area))} has zero area")
    normal /= (2.0 * area)[:, None]
    # orient away from the owner's vertex opposite the face
    owner = face_cells[:, 0]
    local_idx = np.argmax(cell_faces[owner] == np.arange(nf)[:, None], axis=1)
    apex = vertices[cells[owner, local_idx]]
    s = np.einsum("ij,ij->i", normal, p[:, 0] - apex)
    normal[s < 0] *= -1.0

    sign = np.where(face_cells[cell_faces, 0] == np.arange(nc)[:, None], 1, -1).astype(np.int64)

    pc = vertices[cells]
    edges = [np.linalg.norm(pc[:, i] - pc[:, j], axis=1) for i, j in itertools.combinations(range(4), 2)]
    diam = np.max(edges, axis=0)
    inradius = 3.0 * vol / area[cell_faces].sum(axis=1)

    return Mesh(
        vertices=vertices, cells=cells, faces=faces, face_cells=face_cells,
        face_area=area, face_normal=normal, cell_faces=cell_faces, cell_face_sign=sign,
        cell_volume=vol, cell_diameter=diam, cell_inradius=inradius, h=float(diam.max()),
    )


def build_structured_cube(n: int, extent=((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))) -> Mesh:
    """Kuhn subdivision of a box: ``n**3`` subcubes, six tetrahedra each."""
    if int(n) != n or n < 1:
        raise MeshError(f"need n >= 1 subdivisions, got {n}")
    n = int(n)
    lo = np.array([e[0] for e in extent], dtype=float)
    hi = np.array([e[1] for e in extent], dtype=float)
    if lo.shape != (3,) or np.any(hi <= lo):
        raise MeshError(f"degenerate extent {extent}")

    ticks = [np.linspace(lo[d], hi[d], n + 1) for d in range(3)]
    X, Y, Z = np.meshgrid(*ticks, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def vid(i, j, k):
        return (i * (n + 1) + j) * (n + 1) + k

    idx = np.arange(n)
    I, J, K = (a.ravel() for a in np.meshgrid(idx, idx, idx, indexing="ij"))
    cells = []
    for perm in itertools.permutations(range(3)):
        corner = np.zeros((len(I), 3), dtype=np.int64)
        corner[:] = np.column_stack([I, J, K])
        tet = [vid(*corner.T)]
        for axis in perm:
            corner = corner.copy()
            corner[:, axis] += 1
            tet.append(vid(*corner.T))
        cells.append(np.column_stack(tet))
    # group the six tetrahedra of one subcube together
    cells = np.stack(cells, axis=1).reshape(-1, 4)
    return from_arrays(vertices, cells)


def regularity_report(mesh: Mesh) -> dict:
    """Shape-regularity ratios ``xi[K]/diam[K]`` and ``diam[K]/h``."""
    q = mesh.cell_inradius / mesh.cell_diameter
    s = mesh.cell_diameter / mesh.h
    return {
        "min_inradius_ratio": float(q.min()),
        "max_inradius_ratio": float(q.max()),
        "min_size_ratio": float(s.min()),
        "max_size_ratio": float(s.max()),
    }


def check_invariants(mesh: Mesh, rtol: float = 1e-12) -> None:
    """Raise ``MeshError`` naming the first offending entity, if any."""
    if np.any(mesh.cell_volume <= 0):
        raise MeshError(f"cell {int(np.argmin(mesh.cell_volume))} has nonpositive volume")
    if np.any(mesh.face_area <= 0):
        raise MeshError(f"face {int(np.argmin(mesh.face_area))} has nonpositive area")
    defect = np.linalg.norm(mesh.closure_defect(), axis=1)
    scale = mesh.face_area[mesh.cell_faces].sum(axis=1)
    bad = np.flatnonzero(defect > rtol * scale)
    if len(bad):
        raise MeshError(f"cell {int(bad[0])} is not closed (defect {defect[bad[0]]:.3e})")
    f = mesh.interior_faces
    K, L = mesh.face_cells[f].T
    inK = (mesh.cell_faces[K] == f[:, None]) & (mesh.cell_face_sign[K] == 1)
    inL = (mesh.cell_faces[L] == f[:, None]) & (mesh.cell_face_sign[L] == -1)
    ok = inK.any(axis=1) & inL.any(axis=1)
    if not ok.all():
        raise MeshError(f"face {int(f[~ok][0])} has inconsistent orientation")
