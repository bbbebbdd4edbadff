"""Conforming triangulations and newest vertex bisection.

Triangles are stored counterclockwise. Local edge ``k`` of a triangle is the
edge opposite its local vertex ``k``; ``refinement_edge[t]`` is therefore also
the local index of the newest vertex of ``t``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional

import numpy as np

logger = logging.getLogger(__name__)

INTERIOR = 0
DIRICHLET = 1

# local edge k joins these two local vertices (and is opposite vertex k)
LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])


class MeshError(ValueError):
    """Invalid mesh input or failed refinement."""


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    refinement_edge: np.ndarray
    generation: np.ndarray
    edges: np.ndarray = field(repr=False)
    edge_triangles: np.ndarray = field(repr=False)
    tri_edges: np.ndarray = field(repr=False)
    boundary_flags: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("vertices", "triangles", "refinement_edge", "generation",
                     "edges", "edge_triangles", "tri_edges", "boundary_flags"):
            getattr(self, name).flags.writeable = False

    def __repr__(self):
        return f"Mesh(n_vertices={self.n_vertices}, n_triangles={self.n_triangles})"

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_flags == DIRICHLET)

    @cached_property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_flags == INTERIOR)

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.edges[self.boundary_edges])

    @cached_property
    def interior_vertices(self) -> np.ndarray:
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[self.boundary_vertices] = False
        return np.flatnonzero(mask)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        return _signed_areas(self.vertices, self.triangles)

    @property
    def areas(self) -> np.ndarray:
        return self.signed_areas

    @cached_property
    def edge_vectors(self) -> np.ndarray:
        """(nt, 3, 2) vector along each local edge, oriented counterclockwise."""
        v = self.vertices[self.triangles]
        return v[:, [2, 0, 1]] - v[:, [1, 2, 0]]

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        """(nt, 3) length of each local edge."""
        return np.linalg.norm(self.edge_vectors, axis=2)

    @cached_property
    def diameters(self) -> np.ndarray:
        return self.edge_lengths.max(axis=1)

    @cached_property
    def outward_normals(self) -> np.ndarray:
        """(nt, 3, 2) outward unit normal per local edge."""
        e = self.edge_vectors
        nrm = np.stack([e[..., 1], -e[..., 0]], axis=-1)
        return nrm / self.edge_lengths[..., None]

    @cached_property
    def gradients(self) -> np.ndarray:
        """(nt, 3, 2) constant gradients of the three barycentric hat functions."""
        # grad(lambda_k) = -n_k * |e_k| / (2|T|)
        e = self.edge_vectors
        rot = np.stack([e[..., 1], -e[..., 0]], axis=-1)
        return -rot / (2.0 * self.signed_areas[:, None, None])

    @cached_property
    def global_edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def area(self) -> float:
        return float(self.signed_areas.sum())

    def element_geometry(self, t: int) -> "ElementGeometry":
        return ElementGeometry(
            area=float(self.signed_areas[t]),
            diameter=float(self.diameters[t]),
            edge_lengths=self.edge_lengths[t].copy(),
            unit_normals=self.outward_normals[t].copy(),
        )

    def min_angles(self) -> np.ndarray:
        """Smallest interior angle of every triangle, in radians."""
        v = self.vertices[self.triangles]
        angles = []
        for k in range(3):
            a = v[:, (k + 1) % 3] - v[:, k]
            b = v[:, (k + 2) % 3] - v[:, k]
            cos = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angles.append(np.arccos(np.clip(cos, -1.0, 1.0)))
        return np.min(angles, axis=0)

    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)


@dataclass(frozen=True)
class ElementGeometry:
    area: float
    diameter: float
    edge_lengths: np.ndarray
    unit_normals: np.ndarray


@dataclass(frozen=True, eq=False)
class Refinement:
    """Relation between a mesh and its refinement.

    ``parent[t]`` is the coarse triangle containing fine triangle ``t``.
    Fine vertices ``0..n_coarse-1`` coincide with the coarse ones; every later
    vertex ``n_coarse + i`` is the midpoint of coarse vertices
    ``vertex_parents[i]``.
    """

    coarse: Mesh
    fine: Mesh
    parent: np.ndarray
    vertex_parents: np.ndarray

    def prolong(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.coarse.n_vertices,):
            raise MeshError("value vector does not match the coarse mesh")
        mid = 0.5 * (values[self.vertex_parents[:, 0]] + values[self.vertex_parents[:, 1]])
        return np.concatenate([values, mid])


def _signed_areas(vertices, triangles):
    v = vertices[triangles]
    d1 = v[:, 1] - v[:, 0]
    d2 = v[:, 2] - v[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _edge_table(triangles):
    nt = len(triangles)
    local = triangles[:, LOCAL_EDGES]  # (nt, 3, 2)
    pairs = np.sort(local.reshape(-1, 2), axis=1)
    edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    if np.any(counts > 2):
        bad = edges[np.argmax(counts)]
        raise MeshError(f"nonmanifold edge {tuple(int(i) for i in bad)} shared by more than two triangles")
    tri_edges = inverse.reshape(nt, 3)
    edge_triangles = np.full((len(edges), 2), -1, dtype=np.int64)
    owner = np.repeat(np.arange(nt), 3)
    order = np.argsort(inverse, kind="stable")
    sorted_e = inverse[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = sorted_e[1:] != sorted_e[:-1]
    edge_triangles[sorted_e[first], 0] = owner[order[first]]
    edge_triangles[sorted_e[~first], 1] = owner[order[~first]]
    return edges.astype(np.int64), edge_triangles, tri_edges.astype(np.int64)


def _longest_edge(vertices, triangles):
    v = vertices[triangles]
    e = v[:, [2, 0, 1]] - v[:, [1, 2, 0]]
    lengths = np.einsum("ijk,ijk->ij", e, e)
    ref = np.empty(len(triangles), dtype=np.int64)
    for t in range(len(triangles)):
        lmax = lengths[t].max()
        cands = [k for k in range(3) if lengths[t, k] >= lmax * (1 - 1e-12)]
        # ties: the edge whose opposite vertex has the smallest global index
        ref[t] = min(cands, key=lambda k: triangles[t, k])
    return ref


def _assemble(vertices, triangles, refinement_edge, generation, boundary_spec=None):
    edges, edge_triangles, tri_edges = _edge_table(triangles)
    flags = np.where(edge_triangles[:, 1] < 0, DIRICHLET, INTERIOR).astype(np.int8)
    if boundary_spec is not None:
        bnd = np.flatnonzero(flags == DIRICHLET)
        mids = 0.5 * (vertices[edges[bnd, 0]] + vertices[edges[bnd, 1]])
        for e, m in zip(bnd, mids):
            if not boundary_spec(m):
                raise MeshError(f"boundary edge {tuple(int(i) for i in edges[e])} is not classified as Dirichlet")
    return Mesh(
        vertices=vertices,
        triangles=triangles,
        refinement_edge=refinement_edge,
        generation=generation,
        edges=edges,
        edge_triangles=edge_triangles,
        tri_edges=tri_edges,
        boundary_flags=flags,
    )


def build_mesh(vertices, triangles, boundary_spec: Optional[Callable] = None,
               refinement_edge=None) -> Mesh:
    """Build a conforming mesh from vertex coordinates and vertex-index triples.

    Parameters
    ----------
    vertices : (nv, 2) array_like
    triangles : (nt, 3) array_like of int
        Counterclockwise triples; clockwise input is rejected.
    boundary_spec : callable, optional
        Called with the midpoint of each boundary edge; must return True
        (Dirichlet) for every one. By default all boundary edges are Dirichlet.
    refinement_edge : (nt,) array_like, optional
        Explicit local refinement edges. Defaults to the longest edge, ties
        broken by the smallest opposite-vertex index.
    """
    vertices = np.array(vertices, dtype=float).reshape(-1, 2)
    triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
    if len(triangles) == 0:
        raise MeshError("empty mesh")
    if triangles.min() < 0 or triangles.max() >= len(vertices):
        raise MeshError("triangle vertex index out of range")
    if not np.all(np.isfinite(vertices)):
        raise MeshError("non-finite vertex coordinates")
    areas = _signed_areas(vertices, triangles)
    scale = np.ptp(vertices, axis=0).max() ** 2
    for t in np.flatnonzero(np.abs(areas) <= 1e-14 * scale):
        raise MeshError(f"degenerate triangle {t} (zero area)")
    for t in np.flatnonzero(areas < 0):
        raise MeshError(f"triangle {t} is clockwise")
    if refinement_edge is None:
        refinement_edge = _longest_edge(vertices, triangles)
    else:
        refinement_edge = np.array(refinement_edge, dtype=np.int64).reshape(-1)
        if refinement_edge.shape != (len(triangles),) or np.any((refinement_edge < 0) | (refinement_edge > 2)):
            raise MeshError("refinement_edge must hold one local index in {0,1,2} per triangle")
    generation = np.zeros(len(triangles), dtype=np.int64)
    return _assemble(vertices, triangles, refinement_edge, generation, boundary_spec)


def _rotate(triangles, ref):
    """Rotate triples so the newest vertex sits at local position 0."""
    idx = (np.arange(3)[None, :] + ref[:, None]) % 3
    return np.take_along_axis(triangles, idx, axis=1)


def bisect(mesh: Mesh, marked, max_depth: int = 64, return_refinement: bool = False):
    """Refine ``mesh`` by newest vertex bisection with conformity closure.

    Every marked triangle is bisected across its refinement edge; the closure
    then bisects neighbours until no hanging node remains. Children place the
    new midpoint at local position 0, which makes it their newest vertex.

    Returns the refined mesh, or ``(mesh, Refinement)`` when
    ``return_refinement`` is set.
    """
    marked = np.unique(np.asarray(list(marked) if not isinstance(marked, np.ndarray) else marked,
                                  dtype=np.int64))
    if marked.size and (marked.min() < 0 or marked.max() >= mesh.n_triangles):
        raise MeshError("marked element id out of range")
    nt, nv = mesh.n_triangles, mesh.n_vertices
    tri_idx = np.arange(nt)
    ref_edge_id = mesh.tri_edges[tri_idx, mesh.refinement_edge]

    edge_marked = np.zeros(mesh.n_edges, dtype=bool)
    edge_marked[ref_edge_id[marked]] = True
    sweeps = 0
    while True:
        has_marked = edge_marked[mesh.tri_edges].any(axis=1)
        need = has_marked & ~edge_marked[ref_edge_id]
        if not need.any():
            break
        sweeps += 1
        if sweeps > max_depth:
            raise MeshError(
                f"closure exceeded depth {max_depth}; initial refinement edges are incompatible")
        edge_marked[ref_edge_id[need]] = True

    if not edge_marked.any():
        same = mesh
        if return_refinement:
            return same, Refinement(mesh, mesh, tri_idx.copy(), np.zeros((0, 2), dtype=np.int64))
        return same

    new_edges = np.flatnonzero(edge_marked)
    midpoint_id = np.full(mesh.n_edges, -1, dtype=np.int64)
    midpoint_id[new_edges] = nv + np.arange(len(new_edges))
    vertex_parents = mesh.edges[new_edges]
    vertices = np.vstack([mesh.vertices, mesh.vertices[vertex_parents].mean(axis=1)])

    rot = _rotate(mesh.triangles, mesh.refinement_edge)
    rot_edges = _rotate(mesh.tri_edges, mesh.refinement_edge)
    split = edge_marked[ref_edge_id]

    keep = np.flatnonzero(~split)
    out_tris = [mesh.triangles[keep]]
    out_ref = [mesh.refinement_edge[keep]]
    out_gen = [mesh.generation[keep]]
    out_parent = [keep]

    s = np.flatnonzero(split)
    a, b, c = rot[s, 0], rot[s, 1], rot[s, 2]
    m = midpoint_id[rot_edges[s, 0]]
    gen = mesh.generation[s] + 1
    # child 1 (m, a, b): refinement edge ab = parent's local edge opposite c
    # child 2 (m, c, a): refinement edge ca = parent's local edge opposite b
    for child, side in (((m, a, b), rot_edges[s, 2]), ((m, c, a), rot_edges[s, 1])):
        x, y, z = child
        again = edge_marked[side]
        once = ~again
        out_tris.append(np.stack([x[once], y[once], z[once]], axis=1))
        out_ref.append(np.zeros(once.sum(), dtype=np.int64))
        out_gen.append(gen[once])
        out_parent.append(s[once])
        m2 = midpoint_id[side[again]]
        xa, ya, za = x[again], y[again], z[again]
        for g in (np.stack([m2, xa, ya], axis=1), np.stack([m2, za, xa], axis=1)):
            out_tris.append(g)
            out_ref.append(np.zeros(len(g), dtype=np.int64))
            out_gen.append(gen[again] + 1)
            out_parent.append(s[again])

    triangles = np.concatenate(out_tris).astype(np.int64)
    refined = _assemble(
        vertices,
        triangles,
        np.concatenate(out_ref).astype(np.int64),
        np.concatenate(out_gen).astype(np.int64),
    )
    logger.debug("bisect: %d marked, %d closure sweeps, %d -> %d triangles",
                 len(marked), sweeps, nt, refined.n_triangles)
    if return_refinement:
        return refined, Refinement(mesh, refined, np.concatenate(out_parent), vertex_parents)
    return refined


def uniform_refine(mesh: Mesh, passes: int = 1) -> Mesh:
    for _ in range(passes):
        mesh = bisect(mesh, np.arange(mesh.n_triangles))
    return mesh


def _grid(x0, y0, k, cell=1.0):
    """Vertices and triangles of a k x k grid of a square cell, with diagonals
    running from lower-left to upper-right."""
    xs = x0 + cell * np.arange(k + 1) / k
    ys = y0 + cell * np.arange(k + 1) / k
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    tris = []
    for j in range(k):
        for i in range(k):
            v00 = j * (k + 1) + i
            v10 = v00 + 1
            v01 = v00 + k + 1
            v11 = v01 + 1
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    return pts, np.array(tris)


def _merge(pieces):
    pts = np.vstack([p for p, _ in pieces])
    offsets = np.cumsum([0] + [len(p) for p, _ in pieces[:-1]])
    tris = np.vstack([t + o for (_, t), o in zip(pieces, offsets)])
    # collapse duplicate vertices along shared cell sides
    keys = np.round(pts * 2 ** 30).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(first)
    relabel = np.empty_like(order)
    relabel[order] = np.arange(len(order))
    return pts[first[order]], relabel[inverse][tris]


def domain_mesh(kind: str, initial_subdivision: int = 1) -> Mesh:
    """Initial mesh of the unit square ``[0,1]^2`` or the L-shape
    ``[-1,1]^2 minus [0,1]x[-1,0]``, each unit cell cut into
    ``initial_subdivision**2`` squares of two triangles."""
    k = int(initial_subdivision)
    if k < 1:
        raise MeshError("initial_subdivision must be >= 1")
    if kind == "unit_square":
        pts, tris = _grid(0.0, 0.0, k)
    elif kind == "l_shape":
        pts, tris = _merge([_grid(-1.0, -1.0, k), _grid(-1.0, 0.0, k), _grid(0.0, 0.0, k)])
    else:
        raise MeshError(f"unknown domain kind {kind!r}")
    return build_mesh(pts, tris)


def check_mesh(mesh: Mesh, expected_area: Optional[float] = None) -> None:
    """Raise MeshError if any structural invariant is violated."""
    if np.any(mesh.signed_areas <= 0):
        raise MeshError("triangle with non-positive signed area")
    edges, edge_triangles, _ = _edge_table(mesh.triangles)
    n_inc = (edge_triangles >= 0).sum(axis=1)
    if not np.array_equal(edges, mesh.edges):
        raise MeshError("stale edge table")
    boundary = n_inc == 1
    if not np.array_equal(boundary, mesh.boundary_flags == DIRICHLET):
        raise MeshError("boundary flags disagree with edge incidence")
    # hanging nodes: a vertex lying strictly inside some edge
    bnd = mesh.edges[boundary]
    if len(bnd):
        p0 = mesh.vertices[bnd[:, 0]]
        p1 = mesh.vertices[bnd[:, 1]]
        used = np.unique(mesh.triangles)
        for v in used:
            x = mesh.vertices[v]
            d = p1 - p0
            t = np.einsum("ij,ij->i", x - p0, d) / np.einsum("ij,ij->i", d, d)
            cross = d[:, 0] * (x - p0)[:, 1] - d[:, 1] * (x - p0)[:, 0]
            inside = (t > 1e-12) & (t < 1 - 1e-12) & (np.abs(cross) < 1e-12 * np.einsum("ij,ij->i", d, d))
            if inside.any():
                raise MeshError(f"hanging node at vertex {v}")
    if expected_area is not None:
        if abs(mesh.area - expected_area) > 1e-12 * abs(expected_area):
            raise MeshError(f"area {mesh.area!r} differs from {expected_area!r}")


def write_mesh(mesh: Mesh, path) -> None:
    """Plain-text format: ``nv nt ne`` then vertices, triangles with their
    refinement edge, and edges with their boundary flag."""
    lines = [f"{mesh.n_vertices} {mesh.n_triangles} {mesh.n_edges}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [f"{i} {j} {k} {r}" for (i, j, k), r in zip(mesh.triangles, mesh.refinement_edge)]
    lines += [f"{a} {b} {f}" for (a, b), f in zip(mesh.edges, mesh.boundary_flags)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    tokens = Path(path).read_text().split("\n")
    nv, nt, ne = (int(s) for s in tokens[0].split())
    body = tokens[1:]
    vertices = np.array([[float(s) for s in line.split()] for line in body[:nv]]).reshape(-1, 2)
    tri_rows = np.array([[int(s) for s in line.split()] for line in body[nv:nv + nt]], dtype=np.int64)
    edge_rows = np.array([[int(s) for s in line.split()] for line in body[nv + nt:nv + nt + ne]],
                         dtype=np.int64).reshape(-1, 3)
    mesh = build_mesh(vertices, tri_rows[:, :3], refinement_edge=tri_rows[:, 3])
    if len(edge_rows) != mesh.n_edges:
        raise MeshError("edge count in file does not match the triangulation")
    given = {(min(a, b), max(a, b)): f for a, b, f in edge_rows}
    for (a, b), f in zip(mesh.edges, mesh.boundary_flags):
        if given.get((int(a), int(b))) != int(f):
            raise MeshError(f"edge ({a}, {b}) missing or flagged inconsistently")
    return mesh
