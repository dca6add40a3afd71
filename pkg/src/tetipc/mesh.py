"""Simulation geometry: tetrahedral bodies, co-dimensional obstacles, mesh I/O.

Solids are read from TetGen-style ``.node``/``.ele`` ASCII files, obstacles
from triangulated OBJ (``v``/``f`` records only). Loaded meshes are
read-only after construction and safe to share across threads.
"""

from dataclasses import dataclass, field

import numpy as np


class MeshError(ValueError):
    """Raised for malformed or degenerate input meshes."""


# Faces opposite each vertex of a positively oriented tet, outward-oriented.
_TET_FACES = ((1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1))


@dataclass
class SimMesh:
    """One simulated body: volumetric solid or co-dimensional obstacle.

    ``tets`` is empty for obstacles. Surface lists hold exactly the boundary
    of the tet mesh (or the whole mesh for obstacles). ``rest_volumes`` is
    cached per tet at load time.
    """

    vertices: np.ndarray        # (n, 3) current positions, meters
    rest_vertices: np.ndarray   # (n, 3)
    tets: np.ndarray            # (m, 4) int
    surface_tris: np.ndarray    # (f, 3) int
    surface_edges: np.ndarray   # (e, 2) int
    surface_verts: np.ndarray   # (v,) int
    vertex_mass: np.ndarray     # (n,) kg
    is_fixed: np.ndarray        # (n,) bool
    rest_volumes: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    def transformed(self, translate=None, rotate=None, scale=None):
        """Return a copy with a rigid transform + uniform scale applied.

        ``rotate`` is a 3x3 matrix applied about the mesh centroid. The rest
        state is transformed identically so rest quantities stay consistent.
        """
        v = self.vertices.copy()
        if scale is not None:
            v = v * float(scale)
        if rotate is not None:
            r = np.asarray(rotate, dtype=np.float64)
            ctr = v.mean(axis=0)
            v = (v - ctr) @ r.T + ctr
        if translate is not None:
            v = v + np.asarray(translate, dtype=np.float64)
        vols = self.rest_volumes.copy()
        if scale is not None:
            vols = vols * float(scale) ** 3
        return SimMesh(
            vertices=v,
            rest_vertices=v.copy(),
            tets=self.tets.copy(),
            surface_tris=self.surface_tris.copy(),
            surface_edges=self.surface_edges.copy(),
            surface_verts=self.surface_verts.copy(),
            vertex_mass=self.vertex_mass.copy(),
            is_fixed=self.is_fixed.copy(),
            rest_volumes=vols,
        )


@dataclass
class Scene:
    """All bodies packed into one global vertex indexing.

    Every ``*_rel`` parameter elsewhere resolves against ``bbox_diagonal``,
    which is computed once from the initial positions.
    """

    bodies: list
    gravity: np.ndarray
    bbox_diagonal: float
    positions: np.ndarray       # (N, 3) packed initial positions
    rest_positions: np.ndarray  # (N, 3)
    masses: np.ndarray          # (N,)
    fixed: np.ndarray           # (N,) bool
    tets: np.ndarray            # (T, 4) global indices
    surf_tris: np.ndarray       # (F, 3) global indices
    surf_edges: np.ndarray      # (E, 2) global indices
    surf_verts: np.ndarray      # (V,) global indices
    body_offsets: np.ndarray    # (len(bodies)+1,)
    tet_volumes: np.ndarray     # (T,)

    @classmethod
    def build(cls, bodies, gravity=(0.0, 0.0, -9.81)):
        offsets = np.zeros(len(bodies) + 1, dtype=np.int64)
        for i, b in enumerate(bodies):
            offsets[i + 1] = offsets[i] + b.num_vertices
        n = int(offsets[-1])
        if n == 0:
            raise MeshError("scene has no vertices")

        positions = np.vstack([b.vertices for b in bodies])
        rest = np.vstack([b.rest_vertices for b in bodies])
        masses = np.concatenate([b.vertex_mass for b in bodies])
        fixed = np.concatenate([b.is_fixed for b in bodies])

        def glob(arr, i):
            return arr + offsets[i] if arr.size else arr.reshape(arr.shape)

        tets = [glob(b.tets, i) for i, b in enumerate(bodies) if b.tets.size]
        tris = [glob(b.surface_tris, i) for i, b in enumerate(bodies) if b.surface_tris.size]
        edges = [glob(b.surface_edges, i) for i, b in enumerate(bodies) if b.surface_edges.size]
        verts = [b.surface_verts + offsets[i] for i, b in enumerate(bodies) if b.surface_verts.size]
        vols = [b.rest_volumes for b in bodies if b.tets.size]

        lo = positions.min(axis=0)
        hi = positions.max(axis=0)
        diag = float(np.linalg.norm(hi - lo))
        if diag <= 0.0:
            raise MeshError("scene bounding box is degenerate")

        return cls(
            bodies=list(bodies),
            gravity=np.asarray(gravity, dtype=np.float64),
            bbox_diagonal=diag,
            positions=positions,
            rest_positions=rest,
            masses=masses,
            fixed=fixed,
            tets=np.vstack(tets) if tets else np.zeros((0, 4), dtype=np.int64),
            surf_tris=np.vstack(tris) if tris else np.zeros((0, 3), dtype=np.int64),
            surf_edges=np.vstack(edges) if edges else np.zeros((0, 2), dtype=np.int64),
            surf_verts=np.concatenate(verts) if verts else np.zeros(0, dtype=np.int64),
            body_offsets=offsets,
            tet_volumes=np.concatenate(vols) if vols else np.zeros(0),
        )


def _parse_numeric_lines(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                rows.append(line.split())
    if not rows:
        raise MeshError(f"{path}: no data")
    return rows


def tet_volumes(vertices, tets):
    """Signed volumes of the given tets."""
    v = vertices
    e = np.stack(
        [v[tets[:, 1]] - v[tets[:, 0]], v[tets[:, 2]] - v[tets[:, 0]], v[tets[:, 3]] - v[tets[:, 0]]],
        axis=2,
    )
    return np.linalg.det(e) / 6.0


def extract_boundary(tets):
    """Surface triangles of a tet mesh: faces belonging to exactly one tet.

    Input tets must be positively oriented; the returned triangles keep the
    outward orientation. Running the extraction again on its output is a
    no-op by construction (each face already appears once).
    """
    faces = []
    for t in np.asarray(tets, dtype=np.int64):
        for f in _TET_FACES:
            faces.append((t[f[0]], t[f[1]], t[f[2]]))
    seen = {}
    for tri in faces:
        key = tuple(sorted(tri))
        if key in seen:
            seen[key] = None
        else:
            seen[key] = tri
    boundary = [tri for tri in seen.values() if tri is not None]
    return np.array(sorted(boundary), dtype=np.int64).reshape(-1, 3)


def unique_edges(tris):
    edges = set()
    for a, b, c in np.asarray(tris, dtype=np.int64):
        edges.add((min(a, b), max(a, b)))
        edges.add((min(b, c), max(b, c)))
        edges.add((min(c, a), max(c, a)))
    return np.array(sorted(edges), dtype=np.int64).reshape(-1, 2)


def load_tet_mesh(node_path, ele_path):
    """Load a TetGen-style solid.

    Inverted tets are reordered to positive orientation; the boundary
    surface, surface edges and rest volumes are extracted eagerly. The first
    vertex index in the ``.node`` file decides 0- versus 1-based indexing.
    """
    node_rows = _parse_numeric_lines(node_path)
    n_verts = int(node_rows[0][0])
    vert_rows = node_rows[1 : 1 + n_verts]
    if len(vert_rows) != n_verts:
        raise MeshError(f"{node_path}: expected {n_verts} vertex rows")
    first_index = int(vert_rows[0][0])
    if first_index not in (0, 1):
        raise MeshError(f"{node_path}: vertex indices must start at 0 or 1")
    verts = np.array([[float(r[1]), float(r[2]), float(r[3])] for r in vert_rows])

    ele_rows = _parse_numeric_lines(ele_path)
    n_tets = int(ele_rows[0][0])
    tet_rows = ele_rows[1 : 1 + n_tets]
    if len(tet_rows) != n_tets:
        raise MeshError(f"{ele_path}: expected {n_tets} tet rows")
    tets = np.array([[int(r[1]), int(r[2]), int(r[3]), int(r[4])] for r in tet_rows], dtype=np.int64)
    tets -= first_index
    if tets.min() < 0 or tets.max() >= n_verts:
        raise MeshError(f"{ele_path}: tet index out of range")

    vols = tet_volumes(verts, tets)
    flip = vols < 0.0
    tets[flip] = tets[flip][:, [0, 1, 3, 2]]
    vols = np.abs(vols)

    diag = float(np.linalg.norm(verts.max(axis=0) - verts.min(axis=0)))
    bad = np.flatnonzero(vols < 1e-14 * diag**3)
    if bad.size:
        raise MeshError(f"{ele_path}: degenerate tet {int(bad[0])} (|volume| below 1e-14*l^3)")

    tris = extract_boundary(tets)
    return SimMesh(
        vertices=verts,
        rest_vertices=verts.copy(),
        tets=tets,
        surface_tris=tris,
        surface_edges=unique_edges(tris),
        surface_verts=np.unique(tris),
        vertex_mass=np.zeros(n_verts),
        is_fixed=np.zeros(n_verts, dtype=bool),
        rest_volumes=vols,
    )


def load_obj_surface(path, fixed=True, area_density=0.0):
    """Load a triangulated OBJ as a co-dimensional obstacle or shell body.

    All vertices are flagged fixed unless ``fixed=False``, in which case a
    lumped area density (kg/m^2) provides vertex masses.
    """
    verts = []
    faces = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] == "f":
                idx = [int(tok.split("/")[0]) for tok in parts[1:]]
                if len(idx) != 3:
                    raise MeshError(f"{path}: non-triangle face with {len(idx)} vertices")
                faces.append(idx)
    if not verts or not faces:
        raise MeshError(f"{path}: needs v and f records")
    v = np.array(verts)
    f = np.array(faces, dtype=np.int64) - 1
    if f.min() < 0 or f.max() >= len(v):
        raise MeshError(f"{path}: face index out of range")

    masses = np.zeros(len(v))
    if not fixed and area_density > 0.0:
        areas = 0.5 * np.linalg.norm(
            np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]]), axis=1
        )
        for tri, area in zip(f, areas):
            masses[tri] += area_density * area / 3.0

    return SimMesh(
        vertices=v,
        rest_vertices=v.copy(),
        tets=np.zeros((0, 4), dtype=np.int64),
        surface_tris=f,
        surface_edges=unique_edges(f),
        surface_verts=np.unique(f),
        vertex_mass=masses,
        is_fixed=np.full(len(v), bool(fixed)),
        rest_volumes=np.zeros(0),
    )


def compute_lumped_masses(mesh, density):
    """Distribute rho*V/4 of every tet to its vertices.

    Total mass equals density times total rest volume to machine precision.
    """
    if density <= 0.0:
        raise MeshError("density must be positive")
    if mesh.tets.size == 0:
        raise MeshError("lumped tet masses need a tet mesh")
    masses = np.zeros(mesh.num_vertices)
    share = density * mesh.rest_volumes / 4.0
    for tet, m in zip(mesh.tets, share):
        masses[tet] += m
    return masses
