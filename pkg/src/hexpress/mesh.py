"""Regular honeycomb tessellation of a rectangular design domain.

Hexagons are pointy-top and laid out in rows; every odd row is shifted
right by half a cell so neighbouring elements always share a full edge.
The lattice is stretched independently in x and y so that its bounding
box is exactly ``[0, L_x] x [0, L_y]``; boundary cells are kept whole,
which leaves zig-zag domain edges.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Local vertex offsets in units of (w/2, a/2), counterclockwise from the bottom.
_VERTEX_OFFSETS = np.array(
    [(0, -2), (1, -1), (1, 1), (0, 2), (-1, 1), (-1, -1)], dtype=np.int64
)


@dataclass(frozen=True)
class HexMesh:
    nodes: np.ndarray  # (n_nodes, 2)
    elements: np.ndarray  # (n_el, 6), counterclockwise
    n_ex: int
    n_ey: int
    domain: tuple[float, float]
    cell_width: float
    edge_length: float  # length of the vertical hexagon edges
    boundary_edges: list[tuple[int, int, tuple[float, float]]] = field(repr=False)

    @property
    def n_el(self) -> int:
        return len(self.elements)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_dofs(self) -> int:
        return 2 * len(self.nodes)

    @property
    def row_pitch(self) -> float:
        return 1.5 * self.edge_length

    @property
    def mean_edge_length(self) -> float:
        xy = self.nodes[self.elements[0]]
        return float(np.mean(np.linalg.norm(np.roll(xy, -1, axis=0) - xy, axis=1)))

    def with_nodes(self, nodes: np.ndarray) -> "HexMesh":
        """Same connectivity on moved node positions."""
        nodes = np.array(nodes, dtype=float)
        if nodes.shape != self.nodes.shape:
            raise ValueError("node array shape mismatch")
        nodes.setflags(write=False)
        return HexMesh(
            nodes=nodes,
            elements=self.elements,
            n_ex=self.n_ex,
            n_ey=self.n_ey,
            domain=self.domain,
            cell_width=self.cell_width,
            edge_length=self.edge_length,
            boundary_edges=self.boundary_edges,
        )

    def element_coords(self) -> np.ndarray:
        """Node coordinates per element, shape (n_el, 6, 2)."""
        return self.nodes[self.elements]

    def centroids(self) -> np.ndarray:
        return self.element_coords().mean(axis=1)

    def element_areas(self) -> np.ndarray:
        return signed_areas(self.element_coords())

    def boundary_node_ids(self) -> np.ndarray:
        ids = set()
        for e, k, _ in self.boundary_edges:
            ids.add(int(self.elements[e, k]))
            ids.add(int(self.elements[e, (k + 1) % 6]))
        return np.array(sorted(ids), dtype=np.int64)

    def side_nodes(self, side: str) -> np.ndarray:
        """Boundary nodes within half a cell of one side of the bounding box.

        ``side`` is one of ``bottom``, ``top``, ``left``, ``right``. The band
        picks up the whole zig-zag edge, so corner nodes belong to two sides.
        """
        b = self.boundary_node_ids()
        xy = self.nodes[b]
        lx, ly = self.domain
        tol_x = 0.5 * self.cell_width * (1 + 1e-9)
        tol_y = 0.5 * self.edge_length * (1 + 1e-9)
        if side == "bottom":
            keep = xy[:, 1] <= tol_y
        elif side == "top":
            keep = xy[:, 1] >= ly - tol_y
        elif side == "left":
            keep = xy[:, 0] <= tol_x
        elif side == "right":
            keep = xy[:, 0] >= lx - tol_x
        else:
            raise ValueError(f"unknown side {side!r}")
        return b[keep]


def signed_areas(coords: np.ndarray) -> np.ndarray:
    """Shoelace areas of polygons given as (..., n, 2) arrays."""
    x, y = coords[..., 0], coords[..., 1]
    return 0.5 * np.sum(x * np.roll(y, -1, axis=-1) - np.roll(x, -1, axis=-1) * y, axis=-1)


def generate_mesh(n_ex: int, n_ey: int, L_x: float, L_y: float) -> HexMesh:
    """Build an ``n_ex`` x ``n_ey`` honeycomb whose bounding box is L_x x L_y."""
    if int(n_ex) != n_ex or int(n_ey) != n_ey or n_ex < 1 or n_ey < 1:
        raise ValueError(f"element counts must be positive integers, got {n_ex}, {n_ey}")
    if not (L_x > 0 and L_y > 0):
        raise ValueError(f"domain lengths must be positive, got {L_x}, {L_y}")
    n_ex, n_ey = int(n_ex), int(n_ey)

    shifted = n_ey > 1
    w = L_x / (n_ex + (0.5 if shifted else 0.0))
    a = L_y / (1.5 * n_ey + 0.5)

    # Integer lattice keys: x = i*w/2, y = j*a/2.
    rows = np.repeat(np.arange(n_ey), n_ex)
    cols = np.tile(np.arange(n_ex), n_ey)
    ci = 1 + 2 * cols + (rows % 2)
    cj = 2 + 3 * rows
    keys = np.stack(
        [ci[:, None] + _VERTEX_OFFSETS[None, :, 0], cj[:, None] + _VERTEX_OFFSETS[None, :, 1]],
        axis=-1,
    ).reshape(-1, 2)
    # Number nodes row-major (by y, then x) for a deterministic ordering.
    uniq, inverse = np.unique(keys[:, ::-1], axis=0, return_inverse=True)
    uniq = uniq[:, ::-1]
    elements = inverse.reshape(-1, 6).astype(np.int64)
    nodes = np.column_stack([uniq[:, 0] * (0.5 * w), uniq[:, 1] * (0.5 * a)])

    boundary_edges = _boundary_edges(nodes, elements)
    nodes.setflags(write=False)
    elements.setflags(write=False)
    return HexMesh(
        nodes=nodes,
        elements=elements,
        n_ex=n_ex,
        n_ey=n_ey,
        domain=(float(nodes[:, 0].max()), float(nodes[:, 1].max())),
        cell_width=w,
        edge_length=a,
        boundary_edges=boundary_edges,
    )


def _boundary_edges(nodes, elements):
    owners: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for e, conn in enumerate(elements):
        for k in range(6):
            n0, n1 = int(conn[k]), int(conn[(k + 1) % 6])
            owners.setdefault((min(n0, n1), max(n0, n1)), []).append((e, k))
    out = []
    for key in sorted(owners):
        hits = owners[key]
        if len(hits) != 1:
            continue
        e, k = hits[0]
        p0 = nodes[elements[e, k]]
        p1 = nodes[elements[e, (k + 1) % 6]]
        t = p1 - p0
        # Counterclockwise element: the outward normal is the tangent turned clockwise.
        n = np.array([t[1], -t[0]]) / np.hypot(*t)
        out.append((e, k, (float(n[0]), float(n[1]))))
    out.sort(key=lambda item: (item[0], item[1]))
    return out


def element_centroid(mesh: HexMesh, i: int) -> np.ndarray:
    if not 0 <= i < mesh.n_el:
        raise IndexError(f"element index {i} out of range [0, {mesh.n_el})")
    return mesh.nodes[mesh.elements[i]].mean(axis=0)


def element_adjacency(mesh: HexMesh) -> list[tuple[int, int]]:
    """Pairs of elements that share an edge."""
    owners: dict[tuple[int, int], list[int]] = {}
    for e, conn in enumerate(mesh.elements):
        for k in range(6):
            n0, n1 = int(conn[k]), int(conn[(k + 1) % 6])
            owners.setdefault((min(n0, n1), max(n0, n1)), []).append(e)
    return sorted(tuple(v) for v in owners.values() if len(v) == 2)
