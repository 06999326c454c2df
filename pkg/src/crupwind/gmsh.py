"""Reader and writer for ASCII Gmsh MSH 2.2 tetrahedral meshes."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh import Mesh, MeshError, check_invariants, from_arrays

TETRAHEDRON = 4


class MshParseError(MeshError):
    def __init__(self, msg, lineno=None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {msg}" if lineno is not None else msg)


def _sections(lines):
    """Yield (name, start_lineno, body_lines) for each $Section ... $EndSection."""
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        if not line.startswith("$"):
            raise MshParseError(f"expected section header, got {line!r}", i + 1)
        name = line[1:]
        end = "$End" + name
        j = i + 1
        while j < len(lines) and lines[j].strip() != end:
            j += 1
        if j == len(lines):
            raise MshParseError(f"section ${name} is not closed", i + 1)
        yield name, i + 2, lines[i + 1:j]
        i = j + 1


def _count(body, start, what):
    if not body:
        raise MshParseError(f"missing {what} count", start)
    try:
        n = int(body[0])
    except ValueError:
        raise MshParseError(f"bad {what} count {body[0].strip()!r}", start) from None
    if len(body) - 1 != n:
        raise MshParseError(f"{what} count {n} does not match {len(body) - 1} entries", start)
    return n


def read_msh(path) -> Mesh:
    lines = Path(path).read_text().splitlines()
    nodes = None
    node_ids = None
    tets = []
    seen_format = seen_elements = False
    for name, start, body in _sections(lines):
        if name == "MeshFormat":
            parts = body[0].split() if body else []
            if len(parts) < 2 or parts[0] not in ("2.2", "2.1", "2") or parts[1] != "0":
                raise MshParseError(f"unsupported mesh format {body[0] if body else ''!r}", start)
            seen_format = True
        elif name == "Nodes":
            n = _count(body, start, "node")
            node_ids = np.empty(n, dtype=np.int64)
            nodes = np.empty((n, 3))
            for k, line in enumerate(body[1:]):
                parts = line.split()
                try:
                    node_ids[k] = int(parts[0])
                    nodes[k] = [float(v) for v in parts[1:4]]
                except (ValueError, IndexError):
                    raise MshParseError(f"bad node record {line.strip()!r}", start + 1 + k) from None
        elif name == "Elements":
            seen_elements = True
            _count(body, start, "element")
            for k, line in enumerate(body[1:]):
                try:
                    parts = [int(v) for v in line.split()]
                    etype, ntags = parts[1], parts[2]
                except (ValueError, IndexError):
                    raise MshParseError(f"bad element record {line.strip()!r}", start + 1 + k) from None
                if etype != TETRAHEDRON:
                    continue
                conn = parts[3 + ntags:]
                if len(conn) != 4:
                    raise MshParseError("tetrahedron needs 4 nodes", start + 1 + k)
                tets.append((conn, start + 1 + k))
    if not seen_format:
        raise MshParseError("missing $MeshFormat section")
    if nodes is None:
        raise MshParseError("missing $Nodes section")
    if not seen_elements:
        raise MshParseError("missing $Elements section")
    if not tets:
        raise MshParseError("no tetrahedra")

    lookup = {int(t): i for i, t in enumerate(node_ids)}
    cells = np.empty((len(tets), 4), dtype=np.int64)
    for c, (conn, lineno) in enumerate(tets):
        try:
            cells[c] = [lookup[v] for v in conn]
        except KeyError as e:
            raise MshParseError(f"unknown node {e.args[0]}", lineno) from None
    # drop nodes that only belong to lower-dimensional elements
    used = np.unique(cells)
    remap = np.full(len(nodes), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    mesh = from_arrays(nodes[used], remap[cells])
    check_invariants(mesh)
    return mesh


def write_msh(mesh: Mesh, path) -> None:
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(len(mesh.vertices))]
    out += [f"{i + 1} {x!r} {y!r} {z!r}" for i, (x, y, z) in enumerate(mesh.vertices.tolist())]
    out += ["$EndNodes", "$Elements", str(mesh.n_cells)]
    out += [f"{c + 1} {TETRAHEDRON} 2 0 1 " + " ".join(str(v + 1) for v in cell)
            for c, cell in enumerate(mesh.cells.tolist())]
    out += ["$EndElements", ""]
    Path(path).write_text("\n".join(out))
