"""Legacy ASCII VTK output."""

from __future__ import annotations

from pathlib import Path

import numpy as np

VTK_TETRA = 10
VTK_TRIANGLE = 5


def _header(title):
    return ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID"]


def _points(vertices):
    out = [f"POINTS {len(vertices)} double"]
    out += [f"{x!r} {y!r} {z!r}" for x, y, z in vertices.tolist()]
    return out


def write_vtk(state, mesh, path, title="crupwind state") -> tuple[Path, Path]:
    """Write cell data (density, mean velocity) and a companion face file.

    The companion ``<stem>_faces.vtk`` holds the triangles of all faces with
    the CR degrees of freedom as cell data.  Returns both paths.
    """
    path = Path(path)
    nc = mesh.n_cells
    lines = _header(title) + _points(mesh.vertices)
    lines.append(f"CELLS {nc} {5 * nc}")
    lines += ["4 " + " ".join(map(str, c)) for c in mesh.cells.tolist()]
    lines.append(f"CELL_TYPES {nc}")
    lines += [str(VTK_TETRA)] * nc
    lines.append(f"CELL_DATA {nc}")
    lines += ["SCALARS density double 1", "LOOKUP_TABLE default"]
    lines += [repr(v) for v in state.rho.values.tolist()]
    lines.append("VECTORS velocity double")
    lines += [f"{a!r} {b!r} {c!r}" for a, b, c in state.u.cell_means().tolist()]
    path.write_text("\n".join(lines) + "\n")

    face_path = path.with_name(path.stem + "_faces.vtk")
    nf = mesh.n_faces
    lines = _header(title + " (CR face dofs)") + _points(mesh.vertices)
    lines.append(f"CELLS {nf} {4 * nf}")
    lines += ["3 " + " ".join(map(str, f)) for f in mesh.faces.tolist()]
    lines.append(f"CELL_TYPES {nf}")
    lines += [str(VTK_TRIANGLE)] * nf
    lines.append(f"CELL_DATA {nf}")
    lines.append("VECTORS velocity_dof double")
    lines += [f"{a!r} {b!r} {c!r}" for a, b, c in state.u.values.tolist()]
    lines += ["SCALARS boundary int 1", "LOOKUP_TABLE default"]
    lines += [str(int(b)) for b in (mesh.face_cells[:, 1] < 0).tolist()]
    face_path.write_text("\n".join(lines) + "\n")
    return path, face_path


def read_vtk_cell_data(path) -> dict:
    """Minimal reader for files written by ``write_vtk``; used in tests."""
    lines = Path(path).read_text().splitlines()
    out = {}
    i = 0
    while i < len(lines):
        parts = lines[i].split()
        if parts and parts[0] == "CELLS":
            out["n_cells"] = int(parts[1])
        if parts and parts[0] == "CELL_DATA":
            n = int(parts[1])
            i += 1
            while i < len(lines):
                head = lines[i].split()
                if head[0] == "SCALARS":
                    out[head[1]] = np.array([float(v) for v in lines[i + 2:i + 2 + n]])
                    i += 2 + n
                elif head[0] == "VECTORS":
                    out[head[1]] = np.array([[float(v) for v in l.split()] for l in lines[i + 1:i + 1 + n]])
                    i += 1 + n
                else:
                    i += 1
            break
        i += 1
    return out
