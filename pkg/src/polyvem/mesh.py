"""Polygonal meshes: connectivity, element geometry, generators and a text format."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    """Base class for malformed or inconsistent meshes."""


class MeshParseError(MeshError):
    pass


class MeshTopologyError(MeshError):
    pass


def signed_area(points: np.ndarray) -> float:
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


class PolygonalMesh:
    """Immutable polygonal partition of a 2D domain.

    Edges are derived from the element polygons.  Each edge is stored with
    its endpoints sorted by global node index, so ``edges[e, 0] < edges[e, 1]``
    defines the global orientation of the edge.

    Parameters
    ----------
    nodes : (n_nodes, 2) array
    elements : sequence of vertex index sequences, each counterclockwise.
    """

    def __init__(self, nodes, elements):
        nodes = np.ascontiguousarray(nodes, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise MeshError("nodes must be an (n, 2) array")
        self.nodes = nodes
        self.elements = [np.asarray(el, dtype=np.int64) for el in elements]
        self._build()
        self.nodes.setflags(write=False)

    def _build(self):
        n_nodes = len(self.nodes)
        edge_index: dict[tuple[int, int], int] = {}
        edges: list[tuple[int, int]] = []
        adjacency: list[list[int]] = []
        element_edges = []
        element_orientation = []
        for k, verts in enumerate(self.elements):
            d = len(verts)
            if d < 3:
                raise MeshTopologyError(f"element {k} has fewer than 3 vertices")
            if verts.min() < 0 or verts.max() >= n_nodes:
                raise MeshTopologyError(f"element {k} references a missing node")
            if len(set(verts.tolist())) != d:
                raise MeshTopologyError(f"element {k} repeats a vertex")
            area = signed_area(self.nodes[verts])
            if area <= 0.0:
                raise MeshTopologyError(f"element {k} is not counterclockwise (area {area:.3e})")
            ids = np.empty(d, dtype=np.int64)
            orient = np.empty(d, dtype=bool)
            for l in range(d):
                a, b = int(verts[l]), int(verts[(l + 1) % d])
                key = (a, b) if a < b else (b, a)
                e = edge_index.get(key)
                if e is None:
                    e = len(edges)
                    edge_index[key] = e
                    edges.append(key)
                    adjacency.append([])
                if len(adjacency[e]) == 2:
                    raise MeshTopologyError(f"edge {key} is shared by more than two elements")
                if k in adjacency[e]:
                    raise MeshTopologyError(f"element {k} uses edge {key} twice")
                adjacency[e].append(k)
                ids[l] = e
                orient[l] = a < b
            element_edges.append(ids)
            element_orientation.append(orient)

        self.edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        self.edge_elements = np.full((len(edges), 2), -1, dtype=np.int64)
        for e, adj in enumerate(adjacency):
            self.edge_elements[e, : len(adj)] = adj
        self.boundary_edge_mask = self.edge_elements[:, 1] < 0
        self.element_edges = element_edges
        self.element_orientation = element_orientation
        used = np.zeros(n_nodes, dtype=bool)
        for verts in self.elements:
            used[verts] = True
        if not used.all():
            raise MeshTopologyError(f"{int((~used).sum())} nodes belong to no element")
        for arr in (self.edges, self.edge_elements, self.boundary_edge_mask):
            arr.setflags(write=False)

    # -- counts -------------------------------------------------------------
    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_boundary_edges(self) -> int:
        return int(self.boundary_edge_mask.sum())

    # -- connectivity queries -------------------------------------------------
    def element_nodes(self, k: int) -> np.ndarray:
        return self.elements[k]

    def element_edge_ids(self, k: int) -> np.ndarray:
        return self.element_edges[k]

    def edge_local_nodes(self, k: int, l: int) -> tuple[int, int]:
        """Local indices of the endpoints of local edge ``l`` of element ``k``."""
        return l, (l + 1) % len(self.elements[k])

    def edge_nodes(self, e: int) -> tuple[int, int]:
        a, b = self.edges[e]
        return int(a), int(b)

    def edge_neighbor(self, e: int, k: int) -> int:
        """Element on the other side of edge ``e`` from ``k`` (-1 on the boundary)."""
        a, b = self.edge_elements[e]
        if a == k:
            return int(b)
        if b == k:
            return int(a)
        raise MeshError(f"edge {e} does not belong to element {k}")

    def is_positive(self, k: int, l: int) -> bool:
        """Whether element ``k`` traverses its local edge ``l`` from lower to higher node index."""
        return bool(self.element_orientation[k][l])

    def is_boundary_edge(self, e: int) -> bool:
        return bool(self.boundary_edge_mask[e])

    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_edge_mask)

    def euler_characteristic(self) -> int:
        return self.n_nodes - self.n_edges + self.n_elements

    def diameters(self) -> np.ndarray:
        return np.array([_diameter(self.nodes[v]) for v in self.elements])

    @property
    def h(self) -> float:
        return float(self.diameters().max())

    def domain_area(self) -> float:
        return float(sum(signed_area(self.nodes[v]) for v in self.elements))

    def __repr__(self):
        return (f"PolygonalMesh(nodes={self.n_nodes}, edges={self.n_edges}, "
                f"elements={self.n_elements}, boundary_edges={self.n_boundary_edges})")


def _diameter(points: np.ndarray) -> float:
    diff = points[:, None, :] - points[None, :, :]
    return float(np.sqrt((diff ** 2).sum(-1)).max())


@dataclass(frozen=True)
class ElementGeometry:
    """Geometric data of one polygon.

    ``edge_signs[l]`` is +1 when the local edge ``l`` runs from the lower to
    the higher global node index and -1 otherwise.  ``edge_start`` and
    ``edge_end`` are the endpoints sorted by that global orientation.
    """

    vertices: np.ndarray
    centroid: np.ndarray
    diameter: float
    area: float
    edge_midpoints: np.ndarray
    edge_lengths: np.ndarray
    normals: np.ndarray
    edge_signs: np.ndarray
    boundary: np.ndarray

    @property
    def n_edges(self) -> int:
        return len(self.vertices)

    @property
    def edge_start(self) -> np.ndarray:
        a = self.vertices
        b = np.roll(self.vertices, -1, axis=0)
        return np.where(self.edge_signs[:, None] > 0, a, b)

    @property
    def edge_end(self) -> np.ndarray:
        a = self.vertices
        b = np.roll(self.vertices, -1, axis=0)
        return np.where(self.edge_signs[:, None] > 0, b, a)


def polygon_geometry(vertices, edge_signs=None, boundary=None) -> ElementGeometry:
    """Geometry of a counterclockwise polygon given by its vertex coordinates."""
    v = np.asarray(vertices, dtype=float)
    d = len(v)
    w = np.roll(v, -1, axis=0)
    cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
    area = 0.5 * cross.sum()
    if not area > 0.0:
        raise MeshTopologyError(f"degenerate or clockwise polygon (area {area:.3e})")
    centroid = ((v + w) * cross[:, None]).sum(0) / (6.0 * area)
    tangent = w - v
    lengths = np.hypot(tangent[:, 0], tangent[:, 1])
    if lengths.min() <= 1e-14 * lengths.max():
        raise MeshTopologyError("polygon has a zero-length edge")
    normals = np.column_stack([tangent[:, 1], -tangent[:, 0]]) / lengths[:, None]
    signs = np.ones(d) if edge_signs is None else np.asarray(edge_signs, dtype=float)
    bnd = np.zeros(d, dtype=bool) if boundary is None else np.asarray(boundary, dtype=bool)
    return ElementGeometry(
        vertices=v,
        centroid=centroid,
        diameter=_diameter(v),
        area=float(area),
        edge_midpoints=0.5 * (v + w),
        edge_lengths=lengths,
        normals=normals,
        edge_signs=signs,
        boundary=bnd,
    )


def element_geometry(mesh: PolygonalMesh, k: int) -> ElementGeometry:
    verts = mesh.elements[k]
    signs = np.where(mesh.element_orientation[k], 1.0, -1.0)
    bnd = mesh.boundary_edge_mask[mesh.element_edges[k]]
    return polygon_geometry(mesh.nodes[verts], signs, bnd)


# -- text format --------------------------------------------------------------

MAGIC = "polyvem-mesh"


def _content_lines(text: str):
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            yield line


def parse_mesh(text: str) -> PolygonalMesh:
    lines = list(_content_lines(text))
    if not lines or lines[0].split() != [MAGIC, "1"]:
        raise MeshParseError(f"expected header '{MAGIC} 1'")
    try:
        n_nodes, n_elements = (int(t) for t in lines[1].split())
    except (IndexError, ValueError) as exc:
        raise MeshParseError("expected '<#nodes> <#elements>' on line 2") from exc
    if len(lines) != 2 + n_nodes + n_elements:
        raise MeshParseError(
            f"expected {n_nodes} node lines and {n_elements} element lines, "
            f"found {len(lines) - 2} data lines")
    nodes = np.empty((n_nodes, 2))
    for i, line in enumerate(lines[2:2 + n_nodes]):
        parts = line.split()
        if len(parts) != 2:
            raise MeshParseError(f"node {i}: expected 'x y', got {line!r}")
        try:
            nodes[i] = [float(parts[0]), float(parts[1])]
        except ValueError as exc:
            raise MeshParseError(f"node {i}: {exc}") from exc
    elements = []
    for k, line in enumerate(lines[2 + n_nodes:]):
        try:
            parts = [int(t) for t in line.split()]
        except ValueError as exc:
            raise MeshParseError(f"element {k}: {exc}") from exc
        if not parts or parts[0] != len(parts) - 1:
            raise MeshParseError(f"element {k}: vertex count does not match")
        elements.append(parts[1:])
    return PolygonalMesh(nodes, elements)


def load_mesh(path) -> PolygonalMesh:
    return parse_mesh(Path(path).read_text(encoding="utf-8"))


def format_mesh(mesh: PolygonalMesh) -> str:
    out = [f"{MAGIC} 1", f"{mesh.n_nodes} {mesh.n_elements}"]
    out += [f"{x!r} {y!r}" for x, y in mesh.nodes.tolist()]
    out += [" ".join(str(i) for i in [len(v), *v.tolist()]) for v in mesh.elements]
    return "\n".join(out) + "\n"


def save_mesh(mesh: PolygonalMesh, path) -> None:
    Path(path).write_text(format_mesh(mesh), encoding="utf-8")


# -- generators ---------------------------------------------------------------

MESH_KINDS = ("triangles", "distorted-quads", "distorted-hexagons")
_ALIASES = {"quads": "distorted-quads", "hexagons": "distorted-hexagons",
            "tri": "triangles", "quad": "distorted-quads", "hex": "distorted-hexagons"}


def _jitter(points, movable, amplitude, rng):
    """Displace ``points[movable]`` uniformly inside boxes of half-width ``amplitude``."""
    out = points.copy()
    idx = np.flatnonzero(movable)
    if amplitude > 0 and len(idx):
        out[idx] += rng.uniform(-1.0, 1.0, size=(len(idx), 2)) * amplitude
    return out


def _grid(domain, nx, ny):
    (x0, x1), (y0, y1) = domain
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    return np.column_stack([X.ravel(), Y.ravel()])


def _structured_counts(domain, target_h):
    (x0, x1), (y0, y1) = domain
    nx = max(1, math.ceil((x1 - x0) * math.sqrt(2.0) / target_h - 1e-9))
    ny = max(1, math.ceil((y1 - y0) * math.sqrt(2.0) / target_h - 1e-9))
    return nx, ny


def triangle_mesh(domain, target_h):
    """Structured right triangles: every grid cell split along its rising diagonal."""
    nx, ny = _structured_counts(domain, target_h)
    nodes = _grid(domain, nx, ny)
    elements = []
    for j in range(ny):
        for i in range(nx):
            a = j * (nx + 1) + i
            b, c, d = a + 1, a + nx + 2, a + nx + 1
            elements.append([a, b, c])
            elements.append([a, c, d])
    return PolygonalMesh(nodes, elements)


def quad_mesh(domain, target_h, distortion=0.2, seed=0):
    """Quadrilateral grid whose interior nodes are randomly displaced.

    Each interior node moves inside a box of half-width ``distortion`` times
    the smaller grid spacing, so displacements stay below ``distortion * target_h``.
    """
    nx, ny = _structured_counts(domain, target_h)
    nodes = _grid(domain, nx, ny)
    (x0, x1), (y0, y1) = domain
    sx, sy = (x1 - x0) / nx, (y1 - y0) / ny
    I, J = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1))
    interior = ((I > 0) & (I < nx) & (J > 0) & (J < ny)).ravel()
    rng = np.random.default_rng(seed)
    nodes = _jitter(nodes, interior, distortion * min(sx, sy), rng)
    elements = []
    for j in range(ny):
        for i in range(nx):
            a = j * (nx + 1) + i
            elements.append([a, a + 1, a + nx + 2, a + nx + 1])
    return PolygonalMesh(nodes, elements)


def hexagon_mesh(domain, target_h, distortion=0.1, seed=0):
    """Honeycomb of hexagons (halved at the left/right walls), randomly distorted.

    Nodes live on a staggered grid whose vertical position alternates by a
    sixth of the row height; cells are offset by one column per row.  The
    nominal hexagon diameter is ``target_h``.
    """
    (x0, x1), (y0, y1) = domain
    side = 0.5 * target_h
    half_w = math.sqrt(3.0) * side / 2.0
    ncol = max(2, math.ceil((x1 - x0) / half_w - 1e-9))
    nrow = max(1, math.ceil((y1 - y0) / (1.5 * side) - 1e-9))
    dx, dy = (x1 - x0) / ncol, (y1 - y0) / nrow
    shift = dy / 6.0

    I, J = np.meshgrid(np.arange(ncol + 1), np.arange(nrow + 1))
    X = x0 + I * dx
    Y = y0 + J * dy + np.where((I + J) % 2 == 0, shift, -shift)
    Y[0, :] = y0
    Y[-1, :] = y1
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    interior = ((I > 0) & (I < ncol) & (J > 0) & (J < nrow)).ravel()
    rng = np.random.default_rng(seed)
    nodes = _jitter(nodes, interior, distortion * min(dx, dy), rng)

    def nid(i, j):
        return j * (ncol + 1) + i

    elements = []
    for j in range(nrow):
        i = j % 2
        cells = [(0, 1)] if i == 1 else []
        while i < ncol:
            width = min(2, ncol - i)
            cells.append((i, width))
            i += width
        for i0, width in cells:
            bottom = [nid(i0 + t, j) for t in range(width + 1)]
            top = [nid(i0 + t, j + 1) for t in range(width, -1, -1)]
            elements.append(bottom + top)
    return PolygonalMesh(nodes, elements)


def generate_mesh(kind: str, domain=((-0.5, 1.5), (0.0, 2.0)), target_h: float = 0.1,
                  seed: int = 0, distortion: float | None = None) -> PolygonalMesh:
    """Build a mesh of an axis-aligned rectangle ``((x0, x1), (y0, y1))``."""
    if not target_h > 0:
        raise ValueError("target_h must be positive")
    kind = _ALIASES.get(kind, kind)
    if kind == "triangles":
        return triangle_mesh(domain, target_h)
    if kind == "distorted-quads":
        return quad_mesh(domain, target_h, 0.2 if distortion is None else distortion, seed)
    if kind == "distorted-hexagons":
        return hexagon_mesh(domain, target_h, 0.1 if distortion is None else distortion, seed)
    raise ValueError(f"unknown mesh kind {kind!r}; expected one of {MESH_KINDS}")
