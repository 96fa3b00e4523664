"""Boundary smoothing of a thresholded density field.

Boundary nodes of the solid phase are chained into closed loops. In each
pass every loop node is projected onto the chord joining the midpoints of
its two loop edges, which removes the V-notches of hexagonal boundaries.
Connectivity and all non-boundary nodes are left alone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh import HexMesh

TV_TOL = 1e-12


@dataclass(frozen=True)
class SmoothingConfig:
    beta: int = 0
    threshold: float = 0.5
    every_iteration: bool = True  # False: one final pass after optimization

    def __post_init__(self):
        if int(self.beta) != self.beta or self.beta < 0:
            raise ValueError("beta must be a non-negative integer")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")


def _edge_owners(mesh: HexMesh) -> dict[tuple[int, int], list[int]]:
    owners: dict[tuple[int, int], list[int]] = {}
    for e, nodes in enumerate(mesh.elements):
        for k in range(6):
            a, b = int(nodes[k]), int(nodes[(k + 1) % 6])
            owners.setdefault((min(a, b), max(a, b)), []).append(e)
    return owners


def boundary_nodes(mesh: HexMesh, rho, threshold: float = 0.5) -> list[np.ndarray]:
    """Closed loops of nodes on the solid/void interface.

    Loops follow the counterclockwise edge orientation of the solid
    elements, so solid lies to the left. The domain exterior counts as void.
    """
    rho = np.asarray(rho, float)
    if rho.shape != (mesh.n_el,):
        raise ValueError(f"density has shape {rho.shape}, mesh has {mesh.n_el} elements")
    solid = rho >= threshold
    nxt: dict[int, int] = {}
    for (a, b), els in _edge_owners(mesh).items():
        s = [e for e in els if solid[e]]
        if len(s) != 1:
            continue
        nodes = mesh.elements[s[0]]
        k = int(np.flatnonzero(nodes == a)[0])
        start, end = (a, b) if nodes[(k + 1) % 6] == b else (b, a)
        if start in nxt:
            raise RuntimeError(f"node {start} has two outgoing boundary edges")
        nxt[start] = end
    loops = []
    while nxt:
        start = min(nxt)
        loop = [start]
        node = nxt.pop(start)
        while node != start:
            loop.append(node)
            node = nxt.pop(node)
        loops.append(np.array(loop, dtype=np.int64))
    return loops


def turning_angles(points: np.ndarray) -> np.ndarray:
    """Signed exterior angle at every vertex of a closed polyline."""
    e_in = points - np.roll(points, 1, axis=0)
    e_out = np.roll(points, -1, axis=0) - points
    cross = e_in[:, 0] * e_out[:, 1] - e_in[:, 1] * e_out[:, 0]
    dot = np.sum(e_in * e_out, axis=1)
    return np.arctan2(cross, dot)


def total_variation(points: np.ndarray) -> float:
    """Sum of absolute turning angles of a closed polyline."""
    return float(np.abs(turning_angles(points)).sum())


def _local_tv(nodes, loop, pos) -> float:
    """Absolute turning angles at the node ``pos`` of ``loop`` and its two neighbours."""
    n = len(loop)
    pts = [nodes[loop[(pos + k) % n]].tolist() for k in (-2, -1, 0, 1, 2)]
    tv = 0.0
    for (ax, ay), (bx, by), (cx, cy) in zip(pts, pts[1:], pts[2:]):
        ux, uy, vx, vy = bx - ax, by - ay, cx - bx, cy - by
        tv += abs(math.atan2(ux * vy - uy * vx, ux * vx + uy * vy))
    return tv


def _chord_foot(p_prev, p, p_next):
    m1 = 0.5 * (p_prev + p)
    m2 = 0.5 * (p + p_next)
    t = m2 - m1
    tt = t @ t
    if tt == 0.0:
        return p.copy()
    return m1 + ((p - m1) @ t / tt) * t


def smooth(mesh: HexMesh, loops, beta: int, frozen=()) -> np.ndarray:
    """Node positions after ``beta`` smoothing passes.

    Within a pass all targets are computed from the positions at the start
    of the pass; each move is then accepted only if it inverts no element
    and does not raise the turning-angle total variation of its loop.
    Nodes in ``frozen`` never move.
    """
    if int(beta) != beta or beta < 0:
        raise ValueError("beta must be a non-negative integer")
    nodes = np.array(mesh.nodes, dtype=float)
    if beta == 0 or not loops:
        return nodes
    frozen = set(int(i) for i in frozen)
    elems = mesh.elements
    elems_next = np.roll(elems, -1, axis=1)
    node_elems: dict[int, list[int]] = {}
    for loop in loops:
        for n in loop:
            node_elems.setdefault(int(n), [])
    for e, conn in enumerate(mesh.elements):
        for n in conn:
            if int(n) in node_elems:
                node_elems[int(n)].append(e)

    for _ in range(int(beta)):
        for loop in loops:
            if len(loop) < 5:
                continue
            pts = nodes[loop]
            targets = [_chord_foot(pts[i - 1], pts[i], pts[(i + 1) % len(loop)]) for i in range(len(loop))]
            for i, n in enumerate(loop):
                n = int(n)
                if n in frozen:
                    continue
                old = nodes[n].copy()
                tv_before = _local_tv(nodes, loop, i)
                nodes[n] = targets[i]
                els = node_elems[n]
                c, cn = elems[els], elems_next[els]
                area2 = (nodes[c, 0] * nodes[cn, 1] - nodes[cn, 0] * nodes[c, 1]).sum(axis=1)
                ok = bool(np.all(area2 > 0))
                if ok:
                    ok = _local_tv(nodes, loop, i) <= tv_before + TV_TOL
                if not ok:
                    nodes[n] = old
    return nodes


def smoothed_mesh(mesh: HexMesh, rho, config: SmoothingConfig, frozen=()) -> HexMesh:
    """Mesh with the same connectivity and smoothed interface nodes."""
    if config.beta == 0:
        return mesh
    loops = boundary_nodes(mesh, rho, config.threshold)
    return mesh.with_nodes(smooth(mesh, loops, config.beta, frozen))
