"""Triangle-mesh connectivity, OFF file I/O, and reference generators.

A :class:`Mesh` is pure topology: vertex count, faces, and the derived
edge tables. Vertex positions travel separately as an
:class:`~metricmesh.projection.Embedding` so the same connectivity can
carry many geometries. Meshes are immutable after construction; all
derived arrays are precomputed and marked read-only, which makes sharing
one mesh across threads safe.

Edges are stored as sorted vertex pairs in lexicographic order, so edge
indices are a stable function of connectivity alone. Everything that
lays out per-edge quantities (metric fields, optimizer state) relies on
that ordering.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import IO, Iterable

import numpy as np

from .errors import (
    FaceIndexError,
    MeshError,
    NonManifoldEdgeError,
    NonTriangleFaceError,
    OFFParseError,
)
from .projection import Embedding


@dataclass(frozen=True)
class Violation:
    """One manifoldness defect found by :func:`validate_manifold`."""

    kind: str
    where: int
    message: str


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class Mesh:
    """Immutable fixed-topology triangle mesh.

    Args:
        vertex_count: number of vertices; faces index into this range.
        faces: integer array of shape (F, 3), three distinct vertex
            indices per face.

    Construction tolerates edges with more than two incident faces so
    that :func:`validate_manifold` can report them; the OFF loader is
    stricter and rejects such files outright.
    """

    __slots__ = (
        "vertex_count",
        "faces",
        "edges",
        "face_edges",
        "edge_face_count",
        "_vertex_faces",
        "_vertex_edges",
        "boundary_edge",
        "boundary_vertex",
    )

    def __init__(self, vertex_count: int, faces):
        faces = np.ascontiguousarray(faces, dtype=np.int64)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise NonTriangleFaceError(
                f"faces must have shape (F, 3), got {faces.shape}"
            )
        if faces.shape[0] == 0:
            raise MeshError("mesh has no faces")
        vertex_count = int(vertex_count)
        if faces.min() < 0 or faces.max() >= vertex_count:
            bad = int(np.flatnonzero((faces < 0) | (faces >= vertex_count)).ravel()[0] // 3)
            raise FaceIndexError(
                f"face {bad} references a vertex outside [0, {vertex_count})"
            )
        same = (
            (faces[:, 0] == faces[:, 1])
            | (faces[:, 1] == faces[:, 2])
            | (faces[:, 2] == faces[:, 0])
        )
        if same.any():
            raise NonTriangleFaceError(
                f"face {int(np.flatnonzero(same)[0])} repeats a vertex"
            )

        self.vertex_count = vertex_count
        self.faces = _freeze(faces)

        # Directed face sides in corner order (i,j), (j,k), (k,i); edge ids
        # come from lexicographic order of the sorted pairs.
        sides = faces[:, (0, 1, 1, 2, 2, 0)].reshape(-1, 2)
        sides_sorted = np.sort(sides, axis=1)
        edges, inverse = np.unique(sides_sorted, axis=0, return_inverse=True)
        self.edges = _freeze(edges)
        self.face_edges = _freeze(inverse.reshape(-1, 3).astype(np.int64))
        self.edge_face_count = _freeze(
            np.bincount(inverse, minlength=edges.shape[0]).astype(np.int64)
        )
        self.boundary_edge = _freeze(self.edge_face_count == 1)

        self._vertex_faces = self._incidence(self.faces, self.face_count)
        self._vertex_edges = self._incidence(self.edges, self.edge_count)

        bv = np.zeros(vertex_count, dtype=bool)
        bv[self.edges[self.boundary_edge].ravel()] = True
        self.boundary_vertex = _freeze(bv)

    def _incidence(self, table: np.ndarray, rows: int) -> tuple:
        """Per-vertex tuple of row indices of ``table`` containing it."""
        flat = table.ravel()
        order = np.argsort(flat, kind="stable")
        row_of = order // table.shape[1]
        counts = np.bincount(flat, minlength=self.vertex_count)
        offsets = np.concatenate(([0], np.cumsum(counts)))
        return tuple(
            _freeze(np.ascontiguousarray(row_of[offsets[v] : offsets[v + 1]]))
            for v in range(self.vertex_count)
        )

    @property
    def face_count(self) -> int:
        return int(self.faces.shape[0])

    @property
    def edge_count(self) -> int:
        return int(self.edges.shape[0])

    def vertex_faces(self, v: int) -> np.ndarray:
        """Indices of faces incident to vertex ``v``, ascending."""
        return self._vertex_faces[v]

    def vertex_edges(self, v: int) -> np.ndarray:
        """Indices of edges incident to vertex ``v``, ascending."""
        return self._vertex_edges[v]

    def edge_index(self, u: int, v: int) -> int:
        """Edge id for the vertex pair (u, v), orientation-free."""
        lo, hi = (u, v) if u <= v else (v, u)
        i = int(np.searchsorted(self.edges[:, 0], lo, side="left"))
        while i < self.edge_count and self.edges[i, 0] == lo:
            if self.edges[i, 1] == hi:
                return i
            i += 1
        raise KeyError(f"no edge between vertices {u} and {v}")

    def __repr__(self) -> str:
        return (
            f"Mesh(V={self.vertex_count}, E={self.edge_count}, F={self.face_count})"
        )


def euler_characteristic(mesh: Mesh) -> int:
    """V - E + F; 2 for sphere topology, 0 for a torus, 1 for a disk."""
    return mesh.vertex_count - mesh.edge_count + mesh.face_count


def validate_manifold(mesh: Mesh) -> list[Violation]:
    """Report manifoldness defects; empty list means the mesh is clean.

    Checks that every edge borders at most two faces and that the faces
    around every vertex form a single fan (one cycle for interior
    vertices, one open strip with exactly two boundary edges otherwise).
    """
    out: list[Violation] = []
    for e in np.flatnonzero(mesh.edge_face_count > 2):
        u, v = (int(x) for x in mesh.edges[e])
        out.append(
            Violation(
                "non-manifold-edge",
                int(e),
                f"edge {e} ({u},{v}) borders {int(mesh.edge_face_count[e])} faces",
            )
        )
    face_edges = mesh.face_edges
    for v in range(mesh.vertex_count):
        incident = mesh.vertex_faces(v)
        if incident.size == 0:
            out.append(Violation("isolated-vertex", v, f"vertex {v} has no faces"))
            continue
        # Adjacency between incident faces through the edges that touch v.
        edge_to_faces: dict[int, list[int]] = {}
        for f in incident:
            for e in face_edges[f]:
                e = int(e)
                if v in mesh.edges[e]:
                    edge_to_faces.setdefault(e, []).append(int(f))
        seen: set[int] = set()
        stack = [int(incident[0])]
        seen.add(int(incident[0]))
        while stack:
            f = stack.pop()
            for e in face_edges[f]:
                e = int(e)
                if e not in edge_to_faces:
                    continue
                for g in edge_to_faces[e]:
                    if g not in seen:
                        seen.add(g)
                        stack.append(g)
        n_open = sum(1 for fs in edge_to_faces.values() if len(fs) == 1)
        if len(seen) != incident.size:
            out.append(
                Violation(
                    "non-manifold-vertex",
                    v,
                    f"faces around vertex {v} split into disconnected fans",
                )
            )
        elif n_open not in (0, 2):
            out.append(
                Violation(
                    "non-manifold-vertex",
                    v,
                    f"vertex {v} has {n_open} open fan edges (expected 0 or 2)",
                )
            )
    return out


# --------------------------------------------------------------------------
# OFF I/O


def _off_lines(text: str) -> Iterable[tuple[int, str]]:
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def load_off(source: str | IO[str]) -> tuple[Mesh, Embedding]:
    """Parse OFF text (string or file-like) into a mesh plus its coordinates.

    '#' comments and blank lines are ignored anywhere. Counts header is
    ``V F E``; the declared edge count is ignored since edges are derived.
    Trailing tokens on face lines (color attributes) are ignored.
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = source
    lines = list(_off_lines(text))
    if not lines:
        raise OFFParseError("empty OFF stream")
    pos = 0
    lineno, header = lines[pos]
    if header.upper() != "OFF":
        raise OFFParseError(f"line {lineno}: expected 'OFF' header, got {header!r}")
    pos += 1
    if pos >= len(lines):
        raise OFFParseError("missing counts line")
    lineno, counts = lines[pos]
    parts = counts.split()
    if len(parts) != 3:
        raise OFFParseError(f"line {lineno}: counts line must hold 3 integers")
    try:
        nv, nf, _ne = (int(p) for p in parts)
    except ValueError as exc:
        raise OFFParseError(f"line {lineno}: bad counts line {counts!r}") from exc
    if nv <= 0 or nf <= 0:
        raise OFFParseError(f"line {lineno}: counts must be positive, got {counts!r}")
    pos += 1
    if len(lines) - pos < nv + nf:
        raise OFFParseError(
            f"expected {nv} vertex and {nf} face lines, found {len(lines) - pos}"
        )
    coords = np.empty((nv, 3), dtype=np.float64)
    for i in range(nv):
        lineno, line = lines[pos + i]
        parts = line.split()
        if len(parts) != 3:
            raise OFFParseError(f"line {lineno}: vertex line must hold 3 coordinates")
        try:
            coords[i] = [float(p) for p in parts]
        except ValueError as exc:
            raise OFFParseError(f"line {lineno}: bad vertex line {line!r}") from exc
    pos += nv
    faces = np.empty((nf, 3), dtype=np.int64)
    for i in range(nf):
        lineno, line = lines[pos + i]
        parts = line.split()
        try:
            arity = int(parts[0])
        except (ValueError, IndexError) as exc:
            raise OFFParseError(f"line {lineno}: bad face line {line!r}") from exc
        if arity != 3:
            raise NonTriangleFaceError(
                f"line {lineno}: face with {arity} vertices, only triangles supported"
            )
        if len(parts) < 4:
            raise OFFParseError(f"line {lineno}: face line too short {line!r}")
        try:
            faces[i] = [int(p) for p in parts[1:4]]
        except ValueError as exc:
            raise OFFParseError(f"line {lineno}: bad face indices {line!r}") from exc
    if len(lines) - pos - nf > 0:
        lineno, line = lines[pos + nf]
        raise OFFParseError(f"line {lineno}: unexpected trailing content {line!r}")
    if (faces < 0).any() or (faces >= nv).any():
        bad = int(np.flatnonzero(((faces < 0) | (faces >= nv)).any(axis=1))[0])
        raise FaceIndexError(f"face {bad} references a vertex outside [0, {nv})")
    mesh = Mesh(nv, faces)
    too_many = np.flatnonzero(mesh.edge_face_count > 2)
    if too_many.size:
        e = int(too_many[0])
        u, v = (int(x) for x in mesh.edges[e])
        raise NonManifoldEdgeError(
            f"edge ({u},{v}) borders {int(mesh.edge_face_count[e])} faces"
        )
    return mesh, Embedding(coords)


def read_off(path) -> tuple[Mesh, Embedding]:
    """Load an OFF file from disk."""
    with open(path, "r", encoding="utf-8") as fh:
        return load_off(fh)


def write_off(mesh: Mesh, embedding: Embedding) -> str:
    """Serialize mesh connectivity plus 3D coordinates as OFF text.

    Coordinates are written with shortest round-trip precision so a
    write/load cycle reproduces them bit for bit.
    """
    coords = embedding.coords
    if coords.shape[1] != 3:
        raise MeshError(
            f"OFF output requires 3D coordinates, embedding has dimension {coords.shape[1]}"
        )
    if coords.shape[0] != mesh.vertex_count:
        raise MeshError(
            f"embedding has {coords.shape[0]} vertices, mesh has {mesh.vertex_count}"
        )
    out = ["OFF", f"{mesh.vertex_count} {mesh.face_count} {mesh.edge_count}"]
    for row in coords:
        out.append(f"{float(row[0])!r} {float(row[1])!r} {float(row[2])!r}")
    for f in mesh.faces:
        out.append(f"3 {int(f[0])} {int(f[1])} {int(f[2])}")
    return "\n".join(out) + "\n"


def save_off(mesh: Mesh, embedding: Embedding, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(write_off(mesh, embedding))


# --------------------------------------------------------------------------
# Generators


def make_icosphere(subdivisions: int) -> tuple[Mesh, Embedding]:
    """Unit icosphere: icosahedron with each face split 4-fold k times.

    Midpoint vertices are pushed back onto the unit sphere after every
    round. V = 10*4**k + 2, F = 20*4**k.
    """
    if subdivisions < 0:
        raise ValueError(f"subdivisions must be >= 0, got {subdivisions}")
    if subdivisions > 7:
        raise ValueError(f"subdivisions capped at 7, got {subdivisions}")
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    raw = [
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ]
    verts = [np.array(p, dtype=np.float64) / math.sqrt(1.0 + phi * phi) for p in raw]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    for _ in range(subdivisions):
        midpoint: dict[tuple[int, int], int] = {}

        def mid(u: int, v: int) -> int:
            key = (u, v) if u < v else (v, u)
            idx = midpoint.get(key)
            if idx is None:
                m = verts[u] + verts[v]
                m /= np.linalg.norm(m)
                verts.append(m)
                idx = len(verts) - 1
                midpoint[key] = idx
            return idx

        new_faces = []
        for i, j, k in faces:
            a, b, c = mid(i, j), mid(j, k), mid(k, i)
            new_faces += [(i, a, c), (j, b, a), (k, c, b), (a, b, c)]
        faces = new_faces
    coords = np.vstack(verts)
    return Mesh(len(verts), np.array(faces, dtype=np.int64)), Embedding(coords)


def make_torus(nu: int, nv: int, major_radius: float, minor_radius: float) -> tuple[Mesh, Embedding]:
    """Structured torus: nu x nv vertex grid, both directions wrapped.

    V = nu*nv, E = 3*nu*nv, F = 2*nu*nv; Euler characteristic 0.
    """
    if nu < 3 or nv < 3:
        raise ValueError(f"torus needs nu, nv >= 3, got ({nu}, {nv})")
    if major_radius <= 0 or minor_radius <= 0 or minor_radius >= major_radius:
        raise ValueError(
            f"torus radii must satisfy 0 < minor < major, got ({major_radius}, {minor_radius})"
        )
    coords = np.empty((nu * nv, 3), dtype=np.float64)
    for i in range(nu):
        theta = 2.0 * math.pi * i / nu
        for j in range(nv):
            phi = 2.0 * math.pi * j / nv
            ring = major_radius + minor_radius * math.cos(phi)
            coords[i * nv + j] = (
                ring * math.cos(theta),
                ring * math.sin(theta),
                minor_radius * math.sin(phi),
            )
    faces = []
    for i in range(nu):
        i1 = (i + 1) % nu
        for j in range(nv):
            j1 = (j + 1) % nv
            v00 = i * nv + j
            v10 = i1 * nv + j
            v11 = i1 * nv + j1
            v01 = i * nv + j1
            faces.append((v00, v10, v11))
            faces.append((v00, v11, v01))
    return Mesh(nu * nv, np.array(faces, dtype=np.int64)), Embedding(coords)


def make_grid(nx: int, ny: int, spacing: float) -> tuple[Mesh, Embedding]:
    """Planar nx x ny vertex grid in the z=0 plane, quads split uniformly.

    Every quad is split along the same diagonal, from its lower-left to
    its upper-right corner. The alternating split looks more symmetric
    but degrades front propagation accuracy near the corners, so the
    uniform one is deliberate.
    """
    if nx < 2 or ny < 2:
        raise ValueError(f"grid needs nx, ny >= 2, got ({nx}, {ny})")
    if spacing <= 0:
        raise ValueError(f"grid spacing must be positive, got {spacing}")
    xs = np.arange(nx, dtype=np.float64) * spacing
    ys = np.arange(ny, dtype=np.float64) * spacing
    coords = np.zeros((nx * ny, 3), dtype=np.float64)
    coords[:, 0] = np.tile(xs, ny)
    coords[:, 1] = np.repeat(ys, nx)
    faces = []
    for j in range(ny - 1):
        for i in range(nx - 1):
            v00 = j * nx + i
            v10 = j * nx + i + 1
            v01 = (j + 1) * nx + i
            v11 = (j + 1) * nx + i + 1
            faces.append((v00, v10, v11))
            faces.append((v00, v11, v01))
    return Mesh(nx * ny, np.array(faces, dtype=np.int64)), Embedding(coords)


_KIND_RE = re.compile(r"^\s*([a-z_]+)\s*[(:]\s*([^)]*?)\s*\)?\s*$")


def generate_mesh(kind: str) -> tuple[Mesh, Embedding]:
    """Build a reference mesh from a spec string.

    Accepted forms: ``icosphere(2)``, ``torus(8,8,2.0,0.5)``,
    ``grid(10,10,1.0)``; a colon may replace the parenthesis, as in
    ``icosphere:2``.
    """
    m = _KIND_RE.match(kind.strip().lower())
    if not m:
        raise ValueError(f"unrecognized mesh spec {kind!r}")
    name, argstr = m.group(1), m.group(2)
    args = [s.strip() for s in argstr.split(",")] if argstr.strip() else []
    arity = {"icosphere": 1, "torus": 4, "grid": 3}
    if name not in arity:
        raise ValueError(
            f"unknown mesh kind {name!r} (expected icosphere, torus, or grid)"
        )
    if len(args) != arity[name]:
        raise ValueError(
            f"mesh kind {name!r} takes {arity[name]} arguments, got {len(args)}"
        )
    try:
        if name == "icosphere":
            return make_icosphere(int(args[0]))
        if name == "torus":
            return make_torus(int(args[0]), int(args[1]), float(args[2]), float(args[3]))
        return make_grid(int(args[0]), int(args[1]), float(args[2]))
    except ValueError as exc:
        raise ValueError(f"bad mesh spec {kind!r}: {exc}") from exc
