"""Legacy VTK output."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh import Mesh
from .pnp import PNPState

VTK_TRIANGLE = 5


def export_vtk(mesh: Mesh, state: PNPState, path) -> Path:
    """ASCII unstructured grid with point arrays ``p``, ``n`` and ``psi``."""
    path = Path(path)
    nv, nt = mesh.n_vertices, mesh.n_triangles
    out = ["# vtk DataFile Version 3.0", "pnp-afem solution", "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {nv} double"]
    out += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices]
    out.append(f"CELLS {nt} {4 * nt}")
    out += [f"3 {i} {j} {k}" for i, j, k in mesh.triangles]
    out.append(f"CELL_TYPES {nt}")
    out += [str(VTK_TRIANGLE)] * nt
    out.append(f"POINT_DATA {nv}")
    for name, comp in zip(("p", "n", "psi"), state.components):
        out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        out += [f"{v:.17g}" for v in comp.values]
    path.write_text("\n".join(out) + "\n")
    return path


def read_vtk(path):
    """Parse a file written by :func:`export_vtk`.

    Returns ``(points, cells, cell_types, point_data)``.
    """
    lines = Path(path).read_text().splitlines()
    i = 0
    points = cells = types = None
    data = {}
    while i < len(lines):
        head = lines[i].split()
        if not head:
            i += 1
            continue
        if head[0] == "POINTS":
            n = int(head[1])
            points = np.array([[float(s) for s in lines[i + 1 + k].split()] for k in range(n)])
            i += n + 1
        elif head[0] == "CELLS":
            n = int(head[1])
            cells = np.array([[int(s) for s in lines[i + 1 + k].split()] for k in range(n)])
            i += n + 1
        elif head[0] == "CELL_TYPES":
            n = int(head[1])
            types = np.array([int(lines[i + 1 + k]) for k in range(n)])
            i += n + 1
        elif head[0] == "SCALARS":
            n = len(points)
            data[head[1]] = np.array([float(lines[i + 2 + k]) for k in range(n)])
            i += n + 2
        else:
            i += 1
    return points, cells, types, data
