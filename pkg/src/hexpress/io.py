"""File exports. Every writer goes through a temp file and an atomic rename."""
from __future__ import annotations

import io
import os
import tempfile
from pathlib import Path

import numpy as np

from .mesh import HexMesh


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def vtk_text(mesh: HexMesh, cell_data=None, point_data=None, point_vectors=None,
             title: str = "hexpress") -> str:
    """Legacy ASCII VTK unstructured grid with polygon cells."""
    cell_data = cell_data or {}
    point_data = point_data or {}
    point_vectors = point_vectors or {}
    out = io.StringIO()
    out.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
    out.write(f"POINTS {mesh.n_nodes} double\n")
    for x, y in mesh.nodes.tolist():
        out.write(f"{x!r} {y!r} 0.0\n")
    n_el = mesh.n_el
    out.write(f"CELLS {n_el} {n_el * 7}\n")
    for conn in mesh.elements:
        out.write("6 " + " ".join(str(int(i)) for i in conn) + "\n")
    out.write(f"CELL_TYPES {n_el}\n")
    out.write("7\n" * n_el)  # VTK_POLYGON
    if cell_data:
        out.write(f"CELL_DATA {n_el}\n")
        for name, values in cell_data.items():
            _scalars(out, name, values, n_el)
    if point_data or point_vectors:
        out.write(f"POINT_DATA {mesh.n_nodes}\n")
        for name, values in point_data.items():
            _scalars(out, name, values, mesh.n_nodes)
        for name, values in point_vectors.items():
            v = np.asarray(values, float).reshape(mesh.n_nodes, 2)
            out.write(f"VECTORS {name} double\n")
            for a, b in v.tolist():
                out.write(f"{a!r} {b!r} 0.0\n")
    return out.getvalue()


def _scalars(out, name, values, n):
    values = np.asarray(values, float)
    if values.shape != (n,):
        raise ValueError(f"{name}: expected {n} values, got {values.shape}")
    out.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
    out.write("\n".join(repr(float(v)) for v in values) + "\n")


def write_vtk(path, mesh: HexMesh, rho=None, pressure=None, displacement=None, forces=None) -> None:
    cells = {"density": rho} if rho is not None else {}
    points = {"pressure": pressure} if pressure is not None else {}
    vectors = {}
    if displacement is not None:
        vectors["displacement"] = displacement
    if forces is not None:
        vectors["pressure_force"] = forces
    atomic_write_text(path, vtk_text(mesh, cells, points, vectors))


def read_vtk_cell_scalars(path, name: str) -> np.ndarray:
    """Minimal reader for the scalars written by :func:`vtk_text`."""
    lines = Path(path).read_text().splitlines()
    n = None
    for i, line in enumerate(lines):
        if line.startswith("CELL_DATA"):
            n = int(line.split()[1])
        if line.startswith(f"SCALARS {name} ") and n is not None:
            return np.array([float(v) for v in lines[i + 2:i + 2 + n]])
    raise KeyError(name)


def svg_text(mesh: HexMesh, rho, width_px: int = 800) -> str:
    """Grey-scale hexagon plot: density 0 is white, 1 is black."""
    rho = np.clip(np.asarray(rho, float), 0.0, 1.0)
    lx, ly = mesh.domain
    s = width_px / lx
    h = ly * s
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width_px}" height="{h:.1f}" '
             f'viewBox="0 0 {width_px} {h:.3f}">']
    coords = mesh.element_coords()
    for poly, r in zip(coords, rho):
        g = int(round(255 * (1.0 - r)))
        pts = " ".join(f"{x * s:.3f},{h - y * s:.3f}" for x, y in poly)
        parts.append(f'<polygon points="{pts}" fill="rgb({g},{g},{g})" stroke="none"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(path, mesh: HexMesh, rho) -> None:
    atomic_write_text(path, svg_text(mesh, rho))


def write_log(path, log) -> None:
    buf = io.StringIO()
    log.write_csv(buf)
    atomic_write_text(path, buf.getvalue())


def write_masks(path, mask_set) -> None:
    buf = io.StringIO()
    mask_set.save(buf)
    atomic_write_text(path, buf.getvalue())
