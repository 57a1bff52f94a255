"""Deformable foot interface geometry.

The foot is a closed triangulated surface whose vertices act as contact
spheres. Vertices in the dorsal band are pinned (they ride the ankle
attachment frame rigidly); the remaining vertices each get a single radial
translational degree of freedom along a fixed body-frame direction.

Body frame convention: x runs heel to toe, y is the lateral axis (the
sagittal plane is y = 0), z is up. The origin sits at the ankle attachment
point, 25% of the foot length ahead of the heel and 80% of the height
above the sole.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull

from .errors import ConfigError, MeshFormatError

# fraction of the bounding box behind/below the ankle origin
_ANKLE_BACK_FRACTION = 0.25
_ANKLE_DOWN_FRACTION = 0.80
# dorsal band that is rigidly attached to the skeleton
PINNED_HEIGHT_FRACTION = 0.25


@dataclass(frozen=True)
class MeshGenSpec:
    """Parameters for the procedural foot surface generator."""

    length: float = 0.298
    width: float = 0.116
    height: float = 0.12
    target_vertices: int = 223
    target_triangles: int = 426
    heel_shape: float = 0.72
    forefoot_shape: float = 0.80
    seed: int = 1

    def __post_init__(self):
        if min(self.length, self.width, self.height) <= 0:
            raise ConfigError("bounding box dimensions must be positive")
        if self.target_vertices < 4:
            raise ConfigError("a closed surface needs at least 4 vertices")
        if self.target_triangles < 4:
            raise ConfigError("a closed surface needs at least 4 triangles")
        if not (0 < self.heel_shape <= 1.5 and 0 < self.forefoot_shape <= 1.5):
            raise ConfigError("shaping parameters must be in (0, 1.5]")


@dataclass(eq=False)
class FootMesh:
    """Rest geometry, topology and vertex classification of one foot.

    vertices: (V, 3) rest positions, body frame [m]
    triangles: (F, 3) vertex index triples
    edges: (E, 2) unique vertex index pairs, sorted within each pair
    rest_lengths: (E,) edge rest lengths [m]
    pinned: (V,) bool, True for vertices attached to the bone
    radial_dir: (V, 3) unit motion direction per free vertex, zeros if pinned
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    rest_lengths: np.ndarray
    pinned: np.ndarray
    radial_dir: np.ndarray
    vertex_radius: float = 0.005
    vertex_mass: float = 0.05
    side: str = "right"

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def free(self) -> np.ndarray:
        return ~self.pinned

    def bounding_box(self) -> np.ndarray:
        """(2, 3) array of per-axis min/max."""
        return np.stack([self.vertices.min(axis=0), self.vertices.max(axis=0)])

    def sole_height(self) -> float:
        """Body-frame height of the contact plane under a resting foot."""
        return float(self.vertices[:, 2].min() - self.vertex_radius)


def edges_from_triangles(triangles: np.ndarray) -> np.ndarray:
    """Unique undirected edges of a triangle list, each pair sorted."""
    tri = np.asarray(triangles)
    pairs = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [0, 2]]])
    pairs = np.sort(pairs, axis=1)
    return np.unique(pairs, axis=0)


def _smoothstep(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _fibonacci_sphere(n: int) -> np.ndarray:
    """n roughly uniform points on the unit sphere (golden-angle spiral)."""
    k = np.arange(n, dtype=float)
    z = 1.0 - (2.0 * k + 1.0) / n
    phi = k * np.pi * (3.0 - np.sqrt(5.0))
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def _pick_vertex_count(spec: MeshGenSpec) -> int:
    """Vertex count whose closed-surface triangle count (2V-4) best matches
    the requested targets; rejects requests no closed surface can satisfy."""
    best_v, best_dev = None, np.inf
    lo = max(4, int(spec.target_vertices * 0.9))
    hi = max(lo, int(spec.target_vertices * 1.1)) + 2
    for v in range(lo, hi + 1):
        dv = abs(v - spec.target_vertices) / spec.target_vertices
        df = abs(2 * v - 4 - spec.target_triangles) / spec.target_triangles
        dev = max(dv, df)
        if dev < best_dev:
            best_v, best_dev = v, dev
    if best_dev > 0.05:
        raise ConfigError(
            f"no closed surface matches {spec.target_vertices} vertices and "
            f"{spec.target_triangles} triangles within 5% (a closed triangulated "
            f"surface has exactly 2V-4 triangles); closest is V={best_v}, "
            f"F={2 * best_v - 4}"
        )
    return int(best_v)


def _foot_shape(points: np.ndarray, spec: MeshGenSpec) -> np.ndarray:
    """Map unit-sphere points onto a foot-like envelope.

    The longitudinal coordinate follows the sphere's x axis (heel at -1,
    toe at +1). The dorsal hemisphere keeps a tall rear dome that tapers
    toward the toes; the plantar hemisphere is compressed into a nearly
    flat sole so that many vertices share the lowest band.
    """
    sx, sy, sz = points[:, 0], points[:, 1], points[:, 2]
    t = (sx + 1.0) * 0.5

    # width: heel_shape at the rear, 1.0 at the metatarsals (t=0.7),
    # forefoot_shape at the toe tip
    w = np.where(
        t <= 0.7,
        spec.heel_shape + (1.0 - spec.heel_shape) * np.sin(0.5 * np.pi * t / 0.7),
        1.0 + (spec.forefoot_shape - 1.0) * _smoothstep((t - 0.7) / 0.3),
    )

    # dorsal envelope: full height over the rear dome, low over the toes
    z_up = 0.22 + 0.78 * (1.0 - _smoothstep((t - 0.12) / 0.78))
    # plantar envelope: rapid saturation flattens the sole
    z_dn = 0.26 * np.abs(np.minimum(sz, 0.0)) ** 0.2

    x = t
    y = sy * w
    z = np.where(sz >= 0.0, sz * z_up, -z_dn)
    return np.column_stack([x, y, z])


def _rescale_to_box(verts: np.ndarray, spec: MeshGenSpec) -> np.ndarray:
    """Affinely map each axis onto the ankle-anchored bounding box."""
    lo = verts.min(axis=0)
    hi = verts.max(axis=0)
    span = hi - lo
    span[span == 0.0] = 1.0
    unit = (verts - lo) / span
    out = np.empty_like(unit)
    out[:, 0] = (unit[:, 0] - _ANKLE_BACK_FRACTION) * spec.length
    out[:, 1] = (unit[:, 1] - 0.5) * spec.width
    out[:, 2] = (unit[:, 2] - _ANKLE_DOWN_FRACTION) * spec.height
    return out


def _orient_outward(verts: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Flip triangle winding so face normals point away from the centroid."""
    c = verts.mean(axis=0)
    a, b, d = verts[triangles[:, 0]], verts[triangles[:, 1]], verts[triangles[:, 2]]
    n = np.cross(b - a, d - a)
    inward = np.einsum("ij,ij->i", n, (a + b + d) / 3.0 - c) < 0.0
    tri = triangles.copy()
    tri[inward] = tri[inward][:, [0, 2, 1]]
    return tri


def pinned_mask_from_height(vertices: np.ndarray,
                            fraction: float = PINNED_HEIGHT_FRACTION) -> np.ndarray:
    """Mark the dorsal band (top `fraction` of the height axis) as pinned."""
    z = vertices[:, 2]
    return z >= z.max() - fraction * (z.max() - z.min())


def default_radial_origin(mesh: FootMesh) -> np.ndarray:
    """Centroid of the pinned set: a proxy for the bone attachment point."""
    if not mesh.pinned.any():
        raise ConfigError("mesh has no pinned vertices")
    return mesh.vertices[mesh.pinned].mean(axis=0)


def assign_radial_directions(mesh: FootMesh, origin: np.ndarray,
                             mode: str = "radial") -> FootMesh:
    """Assign the motion direction of every free vertex.

    mode "radial": unit vector from `origin` to the rest position.
    mode "normal": area-weighted outward surface normal.
    Pinned vertices keep a zero vector (they carry no degree of freedom).
    """
    origin = np.asarray(origin, dtype=float)
    bb = mesh.bounding_box()
    if mode == "radial" and not (np.all(origin >= bb[0]) and np.all(origin <= bb[1])):
        raise ConfigError(f"radial origin {origin} lies outside the mesh bounding box")

    if mode == "radial":
        rel = mesh.vertices - origin
        norms = np.linalg.norm(rel, axis=1)
        if np.any(norms[mesh.free] < 1e-12):
            bad = int(np.nonzero((norms < 1e-12) & mesh.free)[0][0])
            raise ConfigError(f"free vertex {bad} coincides with the radial origin")
        dirs = np.zeros_like(rel)
        nz = norms > 0
        dirs[nz] = rel[nz] / norms[nz, None]
    elif mode == "normal":
        dirs = _vertex_normals(mesh.vertices, mesh.triangles)
    else:
        raise ConfigError(f"unknown radial direction mode {mode!r}")

    dirs[mesh.pinned] = 0.0
    return replace(mesh, radial_dir=dirs)


def _vertex_normals(verts: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a, b, c = verts[triangles[:, 0]], verts[triangles[:, 1]], verts[triangles[:, 2]]
    fn = np.cross(b - a, c - a)  # area-weighted
    vn = np.zeros_like(verts)
    for k in range(3):
        np.add.at(vn, triangles[:, k], fn)
    centroid = verts.mean(axis=0)
    flip = np.einsum("ij,ij->i", vn, verts - centroid) < 0.0
    vn[flip] *= -1.0
    norms = np.linalg.norm(vn, axis=1)
    norms[norms == 0.0] = 1.0
    return vn / norms[:, None]


def generate_foot_mesh(spec: MeshGenSpec) -> FootMesh:
    """Build a deterministic right-foot surface for the given spec.

    The topology comes from the convex hull of a seeded, jittered
    golden-angle sphere sampling; vertex positions are then warped onto a
    foot envelope and rescaled so the bounding box matches the spec
    exactly. The same spec and seed always produce a bit-identical mesh.
    """
    n = _pick_vertex_count(spec)
    pts = _fibonacci_sphere(n)

    rng = np.random.default_rng(spec.seed)
    # small tangential jitter breaks lattice symmetry; a random rotation
    # decorrelates the spiral axis from the foot axes
    from scipy.spatial.transform import Rotation

    q = rng.standard_normal(4)
    rot = Rotation.from_quat(q / np.linalg.norm(q)).as_matrix()
    pts = pts @ rot.T
    pts = pts + 0.004 * rng.standard_normal(pts.shape)
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)

    hull = ConvexHull(pts)
    triangles = _orient_outward(pts, hull.simplices.astype(np.int64))

    verts = _rescale_to_box(_foot_shape(pts, spec), spec)

    edges = edges_from_triangles(triangles)
    rest_lengths = np.linalg.norm(verts[edges[:, 1]] - verts[edges[:, 0]], axis=1)
    pinned = pinned_mask_from_height(verts)

    mesh = FootMesh(
        vertices=verts,
        triangles=triangles,
        edges=edges,
        rest_lengths=rest_lengths,
        pinned=pinned,
        radial_dir=np.zeros_like(verts),
        side="right",
    )
    mesh = assign_radial_directions(mesh, default_radial_origin(mesh))
    validate_foot_mesh(mesh, bbox=(spec.length, spec.width, spec.height))
    return mesh


def mirror_foot(mesh: FootMesh) -> FootMesh:
    """Reflect a foot across the sagittal plane (y -> -y), flipping its side.

    Topology and every rest length are preserved exactly; reflecting twice
    returns the original coordinates bit for bit.
    """
    if mesh.side not in ("left", "right"):
        raise ConfigError(f"unknown side {mesh.side!r}")
    verts = mesh.vertices.copy()
    verts[:, 1] = -verts[:, 1]
    dirs = mesh.radial_dir.copy()
    dirs[:, 1] = -dirs[:, 1]
    return replace(
        mesh,
        vertices=verts,
        radial_dir=dirs,
        rest_lengths=mesh.rest_lengths.copy(),
        side="left" if mesh.side == "right" else "right",
    )


def validate_foot_mesh(mesh: FootMesh, bbox: tuple[float, float, float] | None = None,
                       tol: float = 1e-6) -> None:
    """Check the structural invariants; raise ConfigError on violation."""
    if np.any(mesh.rest_lengths <= 0):
        raise ConfigError("mesh has an edge with non-positive rest length")
    tri_edges = edges_from_triangles(mesh.triangles)
    if len(tri_edges) != len(mesh.edges) or not np.array_equal(
        tri_edges, np.unique(np.sort(mesh.edges, axis=1), axis=0)
    ):
        raise ConfigError("edge list does not match the triangle topology")
    if len(np.unique(np.sort(mesh.edges, axis=1), axis=0)) != len(mesh.edges):
        raise ConfigError("duplicate edges")
    free_norms = np.linalg.norm(mesh.radial_dir[mesh.free], axis=1)
    if len(free_norms) and np.max(np.abs(free_norms - 1.0)) > 1e-9:
        raise ConfigError("free-vertex radial directions are not unit length")
    if not mesh.pinned.any():
        raise ConfigError("pinned vertex set is empty")
    if bbox is not None:
        extent = mesh.bounding_box()[1] - mesh.bounding_box()[0]
        if np.max(np.abs(extent - np.asarray(bbox))) > tol:
            raise ConfigError(
                f"mesh extent {extent} does not match declared bounding box {bbox}"
            )


# ---------------------------------------------------------------------------
# file I/O: ASCII OBJ subset plus a per-vertex attribute sidecar
# ---------------------------------------------------------------------------

def _sidecar_path(path: str | Path) -> Path:
    p = Path(path)
    return p.with_suffix(".attrs.csv") if p.suffix == ".obj" else Path(str(p) + ".attrs.csv")


def save_mesh(mesh: FootMesh, path: str | Path, header_comment: str | None = None) -> None:
    """Write `v`/`f` records plus the attribute sidecar next to them."""
    p = Path(path)
    lines = ["# flexfoot mesh"]
    if header_comment:
        lines.append(f"# {header_comment}")
    lines += [
        f"# side {mesh.side}",
        f"# vertex_radius {mesh.vertex_radius!r}",
        f"# vertex_mass {mesh.vertex_mass!r}",
    ]
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.9f} {v[1]:.9f} {v[2]:.9f}")
    for t in mesh.triangles:
        lines.append(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}")
    p.write_text("\n".join(lines) + "\n")

    with open(_sidecar_path(p), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["vertex_index", "pinned", "rdx", "rdy", "rdz"])
        for i in range(mesh.n_vertices):
            d = mesh.radial_dir[i]
            writer.writerow([i, int(mesh.pinned[i]),
                             f"{d[0]:.12f}", f"{d[1]:.12f}", f"{d[2]:.12f}"])


def load_mesh(path: str | Path) -> FootMesh:
    """Parse an OBJ-subset mesh and its attribute sidecar."""
    p = Path(path)
    verts: list[list[float]] = []
    tris: list[list[int]] = []
    side = "right"
    radius, mass = 0.005, 0.05

    for lineno, raw in enumerate(p.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            fields = line[1:].split()
            if len(fields) == 2 and fields[0] in ("side", "vertex_radius", "vertex_mass"):
                if fields[0] == "side":
                    side = fields[1]
                elif fields[0] == "vertex_radius":
                    radius = float(fields[1])
                else:
                    mass = float(fields[1])
            continue
        tokens = line.split()
        if tokens[0] == "v":
            if len(tokens) != 4:
                raise MeshFormatError(f"vertex record needs 3 coordinates: {line!r}", lineno)
            try:
                verts.append([float(x) for x in tokens[1:]])
            except ValueError:
                raise MeshFormatError(f"bad vertex coordinate: {line!r}", lineno) from None
        elif tokens[0] == "f":
            if len(tokens) != 4:
                raise MeshFormatError("non-triangular face", lineno)
            try:
                idx = [int(x.split("/")[0]) for x in tokens[1:]]
            except ValueError:
                raise MeshFormatError(f"bad face index: {line!r}", lineno) from None
            for i in idx:
                if i < 1 or i > len(verts):
                    raise MeshFormatError(
                        f"face index {i} out of range 1..{len(verts)}", lineno)
            tris.append([i - 1 for i in idx])
        else:
            raise MeshFormatError(f"unsupported record {tokens[0]!r}", lineno)

    if not verts:
        raise MeshFormatError("no vertices in file", None)
    if not tris:
        raise MeshFormatError("no faces in file", None)

    vertices = np.asarray(verts, dtype=float)
    triangles = np.asarray(tris, dtype=np.int64)

    pinned = np.zeros(len(vertices), dtype=bool)
    dirs = np.zeros_like(vertices)
    sidecar = _sidecar_path(p)
    if not sidecar.exists():
        raise MeshFormatError(f"attribute sidecar {sidecar} not found", None)
    with open(sidecar, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["vertex_index", "pinned", "rdx", "rdy", "rdz"]:
            raise MeshFormatError(f"bad sidecar header {header}", 1)
        for lineno, row in enumerate(reader, start=2):
            try:
                i = int(row[0])
                pinned[i] = bool(int(row[1]))
                dirs[i] = [float(row[2]), float(row[3]), float(row[4])]
            except (ValueError, IndexError):
                raise MeshFormatError(f"bad sidecar row {row}", lineno) from None

    edges = edges_from_triangles(triangles)
    rest_lengths = np.linalg.norm(vertices[edges[:, 1]] - vertices[edges[:, 0]], axis=1)
    mesh = FootMesh(
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        rest_lengths=rest_lengths,
        pinned=pinned,
        radial_dir=dirs,
        vertex_radius=radius,
        vertex_mass=mass,
        side=side,
    )
    validate_foot_mesh(mesh)
    return mesh
