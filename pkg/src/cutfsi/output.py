"""Run output: legacy-VTK snapshots of the flow and the structure,
append-only delimiter-separated diagnostics, and history probes evaluated at
reference coordinates through the element-local interpolation.

Flow snapshots write uncut active cells as quads and each cut cell as the fan
triangulation of its fluid-side polygon pieces, with velocity and pressure
interpolated to the extra vertices and a cell mask distinguishing full cells
from cut ones.  Structure snapshots write the deformed configuration with
displacement and velocity as point data.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .cutting import CutConfiguration, ElemStatus
from .meshes import FittedMesh, StructuredGrid
from .quadrature import fan_triangulate
from .solid import _quad_shape, _quad_shape_grad

__all__ = [
    "write_fluid_vtk",
    "write_solid_vtk",
    "write_snapshot",
    "DiagnosticsWriter",
    "locate_reference",
    "evaluate_fitted_probe",
    "evaluate_grid_probe",
]


# -- element-local interpolation ------------------------------------------------


def _grid_local_coords(grid: StructuredGrid, e: int, pts: np.ndarray) -> np.ndarray:
    """Unit-square coordinates of `pts` inside grid element `e`."""
    i, j = grid.elem_ij(e)
    x0 = grid.origin[0] + i * grid.spacing[0]
    y0 = grid.origin[1] + j * grid.spacing[1]
    out = (np.asarray(pts, dtype=float) - (x0, y0)) / grid.spacing
    return out


def _grid_shape_values(local: np.ndarray) -> np.ndarray:
    """Bilinear basis on the unit square for rows of `local`, ordered
    counterclockwise from the lower-left node."""
    s, t = local[:, 0], local[:, 1]
    return np.column_stack([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t])


def evaluate_grid_probe(
    grid: StructuredGrid, nodal: np.ndarray, point
) -> np.ndarray:
    """Interpolate a nodal field (n_nodes, k) of the background grid at a
    physical point."""
    e = grid.locate(point)
    N = _grid_shape_values(_grid_local_coords(grid, e, np.asarray([point])))[0]
    values = np.asarray(nodal, dtype=float).reshape(grid.n_nodes, -1)
    return N @ values[grid.elem_nodes(e)]


def locate_reference(mesh: FittedMesh, point) -> tuple[int, float, float]:
    """Find (element, xi, eta) of a point given in the reference (undeformed)
    configuration of a fitted mesh; raises ValueError when outside."""
    p = np.asarray(point, dtype=float)
    for e in range(mesh.n_elems):
        X = mesh.nodes[mesh.elems[e]]
        lo, hi = X.min(axis=0), X.max(axis=0)
        pad = 1e-9 * max(1.0, float(np.max(hi - lo)))
        if np.any(p < lo - pad) or np.any(p > hi + pad):
            continue
        local = _invert_bilinear(X, p)
        if local is not None:
            return e, local[0], local[1]
    raise ValueError(f"point {point} not inside the fitted mesh")


def _invert_bilinear(X: np.ndarray, p: np.ndarray):
    """Newton inversion of the bilinear map of one quad; None if `p` lies
    outside the element (|xi|, |eta| > 1 beyond tolerance) or the iteration
    fails to converge."""
    scale = max(1.0, float(np.max(np.abs(X))))
    xi = np.zeros(2)
    for _ in range(30):
        N = _quad_shape(xi[0], xi[1])
        r = N @ X - p
        if np.max(np.abs(r)) < 1e-13 * scale:
            break
        J = _quad_shape_grad(xi[0], xi[1]).T @ X
        try:
            xi = xi - np.linalg.solve(J.T, r)
        except np.linalg.LinAlgError:
            return None
    else:
        return None
    if np.max(np.abs(xi)) > 1.0 + 1e-9:
        return None
    return float(np.clip(xi[0], -1.0, 1.0)), float(np.clip(xi[1], -1.0, 1.0))


def evaluate_fitted_probe(mesh: FittedMesh, nodal: np.ndarray, point) -> np.ndarray:
    """Interpolate a nodal field (n_nodes, k) of a fitted mesh at a reference
    point."""
    e, xi, eta = locate_reference(mesh, point)
    N = _quad_shape(xi, eta)
    return N @ np.asarray(nodal, dtype=float).reshape(mesh.n_nodes, -1)[mesh.elems[e]]


# -- legacy VTK writers ----------------------------------------------------------


def _vtk_lines(title: str, points, cells, cell_types, point_data, cell_data):
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {len(points)} double",
    ]
    for x, y in points:
        lines.append(f"{float(x)!r} {float(y)!r} 0.0")
    size = sum(len(c) + 1 for c in cells)
    lines.append(f"CELLS {len(cells)} {size}")
    for c in cells:
        lines.append(" ".join(str(v) for v in (len(c), *c)))
    lines.append(f"CELL_TYPES {len(cells)}")
    lines.extend(str(t) for t in cell_types)
    if point_data:
        lines.append(f"POINT_DATA {len(points)}")
        for name, kind, values in point_data:
            if kind == "vectors":
                lines.append(f"VECTORS {name} double")
                for vx, vy in values:
                    lines.append(f"{float(vx)!r} {float(vy)!r} 0.0")
            else:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(repr(float(v)) for v in values)
    if cell_data:
        lines.append(f"CELL_DATA {len(cells)}")
        for name, values in cell_data:
            lines.append(f"SCALARS {name} int 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(str(int(v)) for v in values)
    return lines


def write_fluid_vtk(path, cfg: CutConfiguration, U, P, title="flow snapshot"):
    """Write the active part of the background flow field.

    Full fluid cells appear as quads (mask 0); every cut cell appears as the
    fan triangulation of its fluid-side polygon pieces (mask 1) with u and p
    interpolated to the polygon vertices.
    """
    grid = cfg.grid
    u = np.asarray(U, dtype=float).reshape(grid.n_nodes, 2)
    p = np.asarray(P, dtype=float).reshape(grid.n_nodes)
    points = [tuple(xy) for xy in grid.node_coords()]
    point_u = list(map(tuple, u))
    point_p = list(p)
    cells, types, mask = [], [], []
    for e in np.flatnonzero(cfg.status == ElemStatus.FLUID):
        cells.append(tuple(int(n) for n in grid.elem_nodes(e)))
        types.append(9)  # VTK_QUAD
        mask.append(0)
    for e, polys in sorted(cfg.pieces.items()):
        nodes = grid.elem_nodes(e)
        for poly in polys:
            for tri in fan_triangulate(poly):
                ids = []
                local = _grid_local_coords(grid, e, tri)
                values_u = _grid_shape_values(local) @ u[nodes]
                values_p = _grid_shape_values(local) @ p[nodes]
                for k in range(3):
                    ids.append(len(points))
                    points.append((float(tri[k, 0]), float(tri[k, 1])))
                    point_u.append((float(values_u[k, 0]), float(values_u[k, 1])))
                    point_p.append(float(values_p[k]))
                cells.append(tuple(ids))
                types.append(5)  # VTK_TRIANGLE
                mask.append(1)
    lines = _vtk_lines(
        title,
        points,
        cells,
        types,
        [("velocity", "vectors", point_u), ("pressure", "scalars", point_p)],
        [("mask", mask)],
    )
    Path(path).write_text("\n".join(lines) + "\n")


def write_solid_vtk(path, mesh: FittedMesh, d, v=None, title="structure snapshot"):
    """Write the structure in its deformed configuration with displacement
    and velocity point data."""
    disp = np.asarray(d, dtype=float).reshape(mesh.n_nodes, 2)
    vel = (
        np.zeros((mesh.n_nodes, 2))
        if v is None
        else np.asarray(v, dtype=float).reshape(mesh.n_nodes, 2)
    )
    points = [tuple(xy) for xy in (mesh.nodes + disp)]
    cells = [tuple(int(n) for n in quad) for quad in mesh.elems]
    lines = _vtk_lines(
        title,
        points,
        cells,
        [9] * len(cells),
        [
            ("displacement", "vectors", list(map(tuple, disp))),
            ("velocity", "vectors", list(map(tuple, vel))),
        ],
        [],
    )
    Path(path).write_text("\n".join(lines) + "\n")


def write_snapshot(directory, index, cfg, U, P, mesh=None, d=None, v=None):
    """Write the flow (and, when given, structure) snapshot files for one
    output step; returns the written paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    fluid_path = directory / f"fluid_{index:06d}.vtk"
    write_fluid_vtk(fluid_path, cfg, U, P)
    written.append(fluid_path)
    if mesh is not None and d is not None:
        solid_path = directory / f"solid_{index:06d}.vtk"
        write_solid_vtk(solid_path, mesh, d, v)
        written.append(solid_path)
    return written


# -- diagnostics -----------------------------------------------------------------


class DiagnosticsWriter:
    """Append-only delimiter-separated time-series log.

    The header is written once when the file is empty; every `append` call
    opens, writes one row, and closes, so partial runs always leave a valid
    file behind.
    """

    def __init__(self, path, columns):
        self.path = Path(path)
        self.columns = list(columns)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if not self.path.exists() or self.path.stat().st_size == 0:
            with self.path.open("w", newline="") as fh:
                csv.writer(fh).writerow(self.columns)

    def append(self, row: dict) -> None:
        missing = set(self.columns) - set(row)
        if missing:
            raise ValueError(f"diagnostics row missing columns {sorted(missing)}")
        with self.path.open("a", newline="") as fh:
            csv.writer(fh).writerow([row[c] for c in self.columns])

    def read_back(self) -> list[dict]:
        with self.path.open(newline="") as fh:
            return list(csv.DictReader(fh))
