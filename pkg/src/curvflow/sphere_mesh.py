"""Geodesic triangulations of the unit 2-sphere.

Meshes are built by midpoint subdivision of a regular icosahedron with
projection back to the sphere.  Faces are oriented counterclockwise seen
from outside (outward normal) and stored with their least-index vertex
first, so boundary traversal always starts at that vertex.  Face areas are
spherical excess areas, which makes the total exactly the sphere area and
keeps flux quantization sharp.

The dual graph (faces as nodes, shared edges as links) carries a Poisson
solver used to build abelian connections with prescribed per-face flux:
the total flux of such a connection is quantized in multiples of 2*pi, and
the quantized part is carried by integer windings allocated to a spread-out
set of faces.  A winding is invisible to every holonomy-derived observable
(it shifts a boundary sum by exactly 2*pi), so the allocation only shapes
the raw edge angles.
"""

from __future__ import annotations

import json

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "SphereMesh",
    "GeometryError",
    "FluxQuantizationError",
    "build_icosphere",
    "spherical_area",
    "dual_poisson_solve",
    "save_json",
    "load_json",
    "MAX_LEVEL",
]

MAX_LEVEL = 7

_PHI = (1.0 + np.sqrt(5.0)) / 2.0


class GeometryError(ValueError):
    """Degenerate geometric configuration."""


class FluxQuantizationError(ValueError):
    """Total flux is not an integer multiple of 2*pi."""


def spherical_area(v0, v1, v2) -> float:
    """Signed spherical excess area of the geodesic triangle (v0, v1, v2).

    Positive for counterclockwise orientation seen from outside the
    sphere.  Uses the half-angle form of the excess, which is robust for
    tiny triangles.  Raises :class:`GeometryError` for collinear or
    antipodal triples.
    """
    v0, v1, v2 = (np.asarray(v, dtype=float) for v in (v0, v1, v2))
    for v in (v0, v1, v2):
        if abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise GeometryError("vertices must be unit vectors")
    num = float(np.linalg.det(np.stack([v0, v1, v2])))
    den = 1.0 + float(v0 @ v1) + float(v1 @ v2) + float(v2 @ v0)
    if den <= 1e-12:
        raise GeometryError("triangle spans a half sphere or contains antipodal vertices")
    if np.linalg.norm(np.cross(v1 - v0, v2 - v0)) < 1e-12:
        raise GeometryError("collinear (or repeated) vertices")
    return 2.0 * float(np.arctan2(num, den))


class SphereMesh:
    """Oriented geodesic triangulation of the unit sphere.

    Attributes
    ----------
    level : int
        Subdivision depth of the generating icosphere.
    vertices : (V, 3) float array of unit vectors.
    faces : (F, 3) int array
        Oriented vertex triples, least-index vertex first, outward
        counterclockwise.
    edges : (E, 2) int array
        Canonically oriented vertex pairs (low index -> high index).
    face_areas : (F,) float array
        Spherical excess areas (all positive; orientation is carried by
        the face ordering, not the sign).
    face_boundaries : list of 3-tuples of (edge_index, sign)
        Cyclic boundary of each face; sign +1 when the boundary traverses
        the edge in its canonical direction.

    Derived geometry exposed for consumers: ``edge_lengths`` (geodesic),
    ``dual_edge_lengths`` (geodesic distance between circumcenters of the
    two adjacent faces), ``face_centroids`` (normalized), plus flat
    ``face_edge_indices``/``face_edge_signs`` arrays for vectorized loops.
    The instance is immutable after construction.
    """

    def __init__(self, vertices, faces, level: int = 0):
        vertices = np.asarray(vertices, dtype=float)
        faces = np.asarray(faces, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise GeometryError(f"vertices must be (V, 3), got {vertices.shape}")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise GeometryError(f"faces must be (F, 3), got {faces.shape}")
        norms = np.linalg.norm(vertices, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-12:
            raise GeometryError("vertices must lie on the unit sphere (tol 1e-12)")

        # least-index vertex first; cyclic rotation preserves orientation
        shift = np.argmin(faces, axis=1)
        faces = np.stack([faces[np.arange(len(faces)), (shift + k) % 3]
                          for k in range(3)], axis=1)

        self.level = int(level)
        self.vertices = vertices
        self.faces = faces

        edge_index: dict[tuple[int, int], int] = {}
        edge_faces: dict[int, list[tuple[int, int]]] = {}
        fe_idx = np.zeros((len(faces), 3), dtype=np.int64)
        fe_sign = np.zeros((len(faces), 3), dtype=np.int64)
        for fi, (a, b, c) in enumerate(faces):
            for k, (s, t) in enumerate(((a, b), (b, c), (c, a))):
                key = (min(s, t), max(s, t))
                ei = edge_index.setdefault(key, len(edge_index))
                sign = 1 if s < t else -1
                fe_idx[fi, k] = ei
                fe_sign[fi, k] = sign
                edge_faces.setdefault(ei, []).append((fi, sign))

        self.edges = np.array(sorted(edge_index, key=edge_index.get), dtype=np.int64)
        self.face_edge_indices = fe_idx
        self.face_edge_signs = fe_sign
        self.face_boundaries = [tuple(zip(fe_idx[fi], fe_sign[fi])) for fi in range(len(faces))]

        for ei, adj in edge_faces.items():
            if len(adj) != 2 or adj[0][1] + adj[1][1] != 0:
                raise GeometryError(f"edge {ei} is not shared by two faces with opposite "
                                    f"orientations: {adj}")
        # per edge: (face with +1, face with -1), plus the boundary slot (0..2)
        # the edge occupies within each of those faces
        ef = np.zeros((len(self.edges), 2), dtype=np.int64)
        efp = np.zeros((len(self.edges), 2), dtype=np.int64)
        for ei, adj in edge_faces.items():
            for fi, sign in adj:
                col = 0 if sign > 0 else 1
                ef[ei, col] = fi
                efp[ei, col] = int(np.nonzero(fe_idx[fi] == ei)[0][0])
        self.edge_faces = ef
        self.edge_face_positions = efp

        v0, v1, v2 = (vertices[faces[:, k]] for k in range(3))
        dets = np.einsum("ij,ij->i", v0, np.cross(v1, v2))
        dens = 1.0 + np.einsum("ij,ij->i", v0, v1) \
            + np.einsum("ij,ij->i", v1, v2) + np.einsum("ij,ij->i", v2, v0)
        if np.any(dens <= 1e-12):
            raise GeometryError("degenerate face (half-sphere span)")
        self.face_areas = 2.0 * np.arctan2(dets, dens)
        if np.any(self.face_areas <= 0):
            raise GeometryError("all faces must be positively oriented")
        if abs(self.face_areas.sum() - 4.0 * np.pi) > 1e-8:
            raise GeometryError(f"face areas sum to {self.face_areas.sum()}, expected 4*pi")

        V, E, F = len(vertices), len(self.edges), len(faces)
        if V - E + F != 2:
            raise GeometryError(f"Euler characteristic {V - E + F} != 2")

        dots = np.einsum("ij,ij->i", vertices[self.edges[:, 0]], vertices[self.edges[:, 1]])
        self.edge_lengths = np.arccos(np.clip(dots, -1.0, 1.0))

        cc = np.cross(v1 - v0, v2 - v0)
        cc /= np.linalg.norm(cc, axis=1, keepdims=True)
        flip = np.einsum("ij,ij->i", cc, v0 + v1 + v2) < 0
        cc[flip] = -cc[flip]
        self.face_circumcenters = cc
        ddots = np.einsum("ij,ij->i", cc[ef[:, 0]], cc[ef[:, 1]])
        self.dual_edge_lengths = np.arccos(np.clip(ddots, -1.0, 1.0))
        if np.any(self.dual_edge_lengths <= 0):
            raise GeometryError("coincident circumcenters of adjacent faces")

        cent = vertices[faces].mean(axis=1)
        self.face_centroids = cent / np.linalg.norm(cent, axis=1, keepdims=True)

        for arr in (self.vertices, self.faces, self.edges, self.face_edge_indices,
                    self.face_edge_signs, self.edge_faces, self.edge_face_positions,
                    self.face_areas, self.edge_lengths, self.face_circumcenters,
                    self.dual_edge_lengths, self.face_centroids):
            arr.setflags(write=False)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    @property
    def spacing(self) -> float:
        """Lattice spacing h: the longest edge arc length."""
        return float(self.edge_lengths.max())

    def boundary_matrix(self) -> sp.csr_matrix:
        """Sparse signed face-by-edge incidence matrix B (F x E); the row of
        a face sums edge values around its oriented boundary."""
        rows = np.repeat(np.arange(self.num_faces), 3)
        cols = self.face_edge_indices.ravel()
        vals = self.face_edge_signs.ravel().astype(float)
        return sp.csr_matrix((vals, (rows, cols)),
                             shape=(self.num_faces, self.num_edges))

    def to_json_dict(self) -> dict:
        return {
            "level": self.level,
            "vertices": self.vertices.tolist(),
            "faces": self.faces.tolist(),
        }


def _icosahedron():
    v = np.array([
        [-1, _PHI, 0], [1, _PHI, 0], [-1, -_PHI, 0], [1, -_PHI, 0],
        [0, -1, _PHI], [0, 1, _PHI], [0, -1, -_PHI], [0, 1, -_PHI],
        [_PHI, 0, -1], [_PHI, 0, 1], [-_PHI, 0, -1], [-_PHI, 0, 1],
    ], dtype=float)
    v /= np.linalg.norm(v, axis=1)[:, None]
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    for i, (a, b, c) in enumerate(f):
        if np.linalg.det(v[[a, b, c]]) < 0:   # enforce outward orientation
            f[i] = [a, c, b]
    return v, f


def _subdivide(vertices, faces):
    verts = list(vertices)
    cache: dict[tuple[int, int], int] = {}

    def midpoint(i: int, j: int) -> int:
        key = (min(i, j), max(i, j))
        if key not in cache:
            m = verts[i] + verts[j]
            cache[key] = len(verts)
            verts.append(m / np.linalg.norm(m))
        return cache[key]

    out = []
    for a, b, c in faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        out += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
    return np.array(verts), np.array(out, dtype=np.int64)


def build_icosphere(level: int) -> SphereMesh:
    """Icosahedron subdivided ``level`` times and projected to the sphere.

    Level 0 has 12 vertices, 30 edges and 20 faces; each level multiplies
    the face count by four.  Levels above ``MAX_LEVEL`` are rejected.
    """
    if level < 0:
        raise ValueError("level must be nonnegative")
    if level > MAX_LEVEL:
        raise ValueError(f"level {level} exceeds the size guard ({MAX_LEVEL})")
    v, f = _icosahedron()
    for _ in range(level):
        v, f = _subdivide(v, f)
    return SphereMesh(v, f, level=level)


def save_json(mesh: SphereMesh, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(mesh.to_json_dict(), fh)


def load_json(path) -> SphereMesh:
    """Load a mesh persisted by :func:`save_json`; edges, areas and all
    derived geometry are recomputed from vertices and faces."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return SphereMesh(np.asarray(doc["vertices"], dtype=float),
                      np.asarray(doc["faces"], dtype=np.int64),
                      level=int(doc["level"]))


def _winding_faces(mesh: SphereMesh, count: int) -> np.ndarray:
    """Deterministic spread of ``count`` winding carriers over the faces."""
    F = mesh.num_faces
    return (np.arange(count, dtype=np.int64) * F) // count


def dual_poisson_solve(mesh: SphereMesh, target_flux, residual_tol: float = 1e-9):
    """Edge angles realizing a prescribed per-face flux, mod 2*pi windings.

    ``target_flux`` must sum to 2*pi*d for an integer d (tolerance 1e-9).
    Because oriented boundary sums over all faces of any edge assignment
    cancel exactly, the quantized total is first removed by placing |d|
    integer 2*pi windings on a deterministic spread of faces, then the
    balanced right-hand side is solved in least squares on the dual graph
    (Laplacian = B B^T, symmetric positive semidefinite with constant
    kernel).  The boundary sum over face f of the returned angles equals
    ``target_flux[f] - 2*pi*w[f]`` within ``residual_tol``, so the face
    holonomy angle of the induced U(1) field equals the target flux
    (mod 2*pi) on every face, winding carriers included.
    """
    target = np.asarray(target_flux, dtype=float)
    if target.shape != (mesh.num_faces,):
        raise ValueError(f"target_flux must have shape ({mesh.num_faces},), got {target.shape}")
    total = float(target.sum())
    d = int(np.round(total / (2.0 * np.pi)))
    if abs(total - 2.0 * np.pi * d) > 1e-9:
        raise FluxQuantizationError(
            f"total flux {total} is not an integer multiple of 2*pi "
            f"(nearest: {d}, defect {total - 2 * np.pi * d:.3e})")

    beta = target.copy()
    if d != 0:
        beta[_winding_faces(mesh, abs(d))] -= 2.0 * np.pi * np.sign(d)
    # distribute any residual imbalance (within the quantization tolerance)
    # area-proportionally so the singular system is consistent
    beta -= mesh.face_areas * (beta.sum() / mesh.face_areas.sum())

    B = mesh.boundary_matrix()
    L = (B @ B.T).tocsr()
    Lp = L.tolil()
    Lp[0, :] = 0.0
    Lp[0, 0] = 1.0
    Lp = Lp.tocsc()
    solve = spla.factorized(Lp)

    rhs = beta.copy()
    rhs[0] = 0.0
    phi = solve(rhs)
    for _ in range(3):
        res = beta - L @ phi
        if np.max(np.abs(res)) < 1e-13:
            break
        res = res - mesh.face_areas * (res.sum() / mesh.face_areas.sum())
        res[0] = 0.0
        phi = phi + solve(res)

    theta = B.T @ phi
    res = np.max(np.abs(B @ theta - beta))
    if res > residual_tol:
        raise FluxQuantizationError(f"Poisson solve residual {res:.3e} exceeds {residual_tol}")
    return theta
