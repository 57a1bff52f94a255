"""Vertex-sphere versus ground-plane contact.

The ground is the rigid half-space z <= 0. Every mesh vertex carries a
contact sphere of radius `vertex_radius`; a vertex is in contact when its
sphere dips below the plane. Normal forces follow the same impedance /
reference-acceleration law as the edge constraints, and tangential forces
are regularized Coulomb friction, so |f_t| <= mu * f_n holds for every
record by construction.

A rigid baseline foot is modeled as a small fixed set of spheres attached
to the same attachment frame with no deformation DoFs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .mesh import FootMesh
from .solver import FlexState, FramePose, SolverParams, impedance, reference_accel, \
    world_positions, world_velocities

SIDE_CODES = {"right": 0, "left": 1}
SIDE_NAMES = {0: "right", 1: "left"}


@dataclass(frozen=True)
class ContactParams:
    """Friction and effective-mass settings for the ground model."""

    friction: float = 1.0                 # Coulomb coefficient mu
    tangential_regularization: float = 1.0e3   # N*s/m viscous slope below the cone
    force_threshold: float = 20.0         # N, "in support" threshold for analysis

    def __post_init__(self):
        if self.friction < 0 or self.tangential_regularization < 0:
            raise ConfigError("friction parameters must be non-negative")


@dataclass(frozen=True)
class RigidFootLayout:
    """Contact spheres of the rigid baseline foot, in attachment-frame
    coordinates. The effective contact mass is the foot segment mass seen
    by the penalty force law (a rigid body, not a single soft vertex)."""

    positions: np.ndarray        # (S, 3)
    radius: float = 0.01
    contact_mass: float = 1.0    # kg

    def __post_init__(self):
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=float))
        if len(self.positions) < 3:
            raise ConfigError("rigid layout needs at least 3 spheres")

    @property
    def n_spheres(self) -> int:
        return len(self.positions)


def default_rigid_layout(mesh: FootMesh, radius: float = 0.01,
                         contact_mass: float = 1.0) -> RigidFootLayout:
    """Six spheres (heel, metatarsal, toe pairs) matching the mesh sole plane."""
    lo, hi = mesh.bounding_box()
    length = hi[0] - lo[0]
    width = hi[1] - lo[1]
    sole = mesh.sole_height()
    zc = sole + radius
    sign = 1.0 if mesh.side == "right" else -1.0
    pts = np.array([
        [lo[0] + 0.05 * length, -0.18 * width * sign, zc],
        [lo[0] + 0.05 * length, +0.18 * width * sign, zc],
        [lo[0] + 0.70 * length, -0.30 * width * sign, zc],
        [lo[0] + 0.70 * length, +0.30 * width * sign, zc],
        [lo[0] + 0.95 * length, -0.12 * width * sign, zc],
        [lo[0] + 0.95 * length, +0.12 * width * sign, zc],
    ])
    return RigidFootLayout(positions=pts, radius=radius, contact_mass=contact_mass)


def detect_contacts(mesh: FootMesh, state: FlexState):
    """Vertices whose contact sphere penetrates the ground.

    Returns (indices, penetrations, world velocities) for vertices with
    world_z - radius < 0; penetration is radius - world_z. The boundary
    case (sphere exactly touching) is not a contact.
    """
    w = world_positions(mesh, state)
    pen = mesh.vertex_radius - w[:, 2]
    idx = np.nonzero(pen > 0.0)[0]
    if len(idx) == 0:
        return idx, np.zeros(0), np.zeros((0, 3))
    vel = world_velocities(mesh, state)[idx]
    return idx, pen[idx], vel


def contact_force(penetration, penetration_rate, tangential_velocity,
                  params: SolverParams, contact: ContactParams,
                  m_eff: float):
    """Unilateral normal force plus regularized Coulomb friction.

    normal = impedance(p) * m_eff * max(0, k*p + b*p_rate); the max() zeroes
    the force when the reference acceleration is separating. tangential =
    -min(mu*normal, c_t*|v_t|) * unit(v_t).
    """
    if penetration <= 0:
        raise ConfigError("contact_force requires positive penetration")
    pushing = max(0.0, -reference_accel(penetration, penetration_rate, params))
    normal = impedance(penetration, params) * m_eff * pushing
    v_t = np.asarray(tangential_velocity, dtype=float)
    speed = float(np.hypot(v_t[0], v_t[1]))
    if speed > 0.0 and normal > 0.0:
        mag = min(contact.friction * normal,
                  contact.tangential_regularization * speed)
        tangential = -mag * v_t / speed
    else:
        tangential = np.zeros(2)
    return normal, tangential


@dataclass
class ContactLog:
    """Struct-of-arrays log of per-step, per-point contact records."""

    time: np.ndarray = field(default_factory=lambda: np.zeros(0))
    side: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))
    vertex: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    position: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    f_normal: np.ndarray = field(default_factory=lambda: np.zeros(0))
    f_tangential: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    penetration: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self) -> int:
        return len(self.time)

    def force_magnitude(self) -> np.ndarray:
        return np.sqrt(self.f_normal ** 2 + np.sum(self.f_tangential ** 2, axis=1))

    def for_side(self, side: str) -> "ContactLog":
        return self.masked(self.side == SIDE_CODES[side])

    def masked(self, mask: np.ndarray) -> "ContactLog":
        return ContactLog(self.time[mask], self.side[mask], self.vertex[mask],
                          self.position[mask], self.f_normal[mask],
                          self.f_tangential[mask], self.penetration[mask])


class ContactLogBuilder:
    """Accumulates per-step record batches without quadratic copying."""

    def __init__(self):
        self._chunks: list[ContactLog] = []

    def add(self, time: float, side: str, vertex: np.ndarray, position: np.ndarray,
            f_normal: np.ndarray, f_tangential: np.ndarray, penetration: np.ndarray):
        n = len(vertex)
        if n == 0:
            return
        self._chunks.append(ContactLog(
            np.full(n, time), np.full(n, SIDE_CODES[side], dtype=np.int8),
            np.asarray(vertex, dtype=np.int64), np.asarray(position, dtype=float),
            np.asarray(f_normal, dtype=float), np.asarray(f_tangential, dtype=float),
            np.asarray(penetration, dtype=float)))

    def build(self) -> ContactLog:
        if not self._chunks:
            return ContactLog()
        return ContactLog(*[np.concatenate([getattr(c, name) for c in self._chunks])
                            for name in ("time", "side", "vertex", "position",
                                         "f_normal", "f_tangential", "penetration")])


def compute_vertex_contacts(mesh: FootMesh, state: FlexState,
                            params: SolverParams, contact: ContactParams):
    """Detect and resolve all vertex contacts for one deformable foot.

    Returns (record batch tuple, (V, 3) world force array for the solver).
    Output ordering is by ascending vertex index, so parallel evaluation
    upstream cannot change the log.
    """
    idx, pen, vel = detect_contacts(mesh, state)
    forces = np.zeros((mesh.n_vertices, 3))
    if len(idx) == 0:
        empty = np.zeros(0)
        return (idx, np.zeros((0, 3)), empty, np.zeros((0, 2)), empty), forces

    pen_rate = -vel[:, 2]
    pushing = np.maximum(0.0, -(reference_accel(pen, pen_rate, params)))
    normal = impedance(pen, params) * mesh.vertex_mass * pushing

    v_t = vel[:, :2]
    speed = np.linalg.norm(v_t, axis=1)
    mag = np.minimum(contact.friction * normal,
                     contact.tangential_regularization * speed)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(speed[:, None] > 0.0, v_t / np.maximum(speed, 1e-300)[:, None], 0.0)
    tangential = -mag[:, None] * unit

    active = normal > 0.0
    idx, pen, normal, tangential = idx[active], pen[active], normal[active], tangential[active]
    pos = world_positions(mesh, state)[idx]

    forces[idx, 0] = tangential[:, 0]
    forces[idx, 1] = tangential[:, 1]
    forces[idx, 2] = normal
    return (idx, pos, normal, tangential, pen), forces


def rigid_baseline_contacts(pose: FramePose, layout: RigidFootLayout,
                            params: SolverParams | None = None,
                            contact: ContactParams | None = None):
    """Contact records for the rigid sphere layout at the given frame pose.

    Returns (sphere indices, world positions, normal forces, tangential
    forces, penetrations) for penetrating spheres, ordered by sphere index.
    """
    params = params or SolverParams()
    contact = contact or ContactParams()
    R = pose.rotation()
    world = pose.position + layout.positions @ R.T
    vel = pose.lin_vel + np.cross(pose.ang_vel, world - pose.position)

    pen = layout.radius - world[:, 2]
    idx = np.nonzero(pen > 0.0)[0]
    if len(idx) == 0:
        empty = np.zeros(0)
        return idx, np.zeros((0, 3)), empty, np.zeros((0, 2)), empty

    pen = pen[idx]
    pen_rate = -vel[idx, 2]
    pushing = np.maximum(0.0, -(reference_accel(pen, pen_rate, params)))
    normal = impedance(pen, params) * layout.contact_mass * pushing

    v_t = vel[idx, :2]
    speed = np.linalg.norm(v_t, axis=1)
    mag = np.minimum(contact.friction * normal,
                     contact.tangential_regularization * speed)
    unit = np.where(speed[:, None] > 0.0, v_t / np.maximum(speed, 1e-300)[:, None], 0.0)
    tangential = -mag[:, None] * unit

    active = normal > 0.0
    return (idx[active], world[idx][active], normal[active],
            tangential[active], pen[active])


CONTACT_CSV_HEADER = ["time", "side", "vertex", "x", "y", "z",
                      "f_normal", "f_tx", "f_ty", "penetration"]


def write_contact_csv(log: ContactLog, path: str | Path,
                      comments: list[str] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        for c in comments or []:
            fh.write(f"# {c}\n")
        writer = csv.writer(fh)
        writer.writerow(CONTACT_CSV_HEADER)
        for k in range(len(log)):
            writer.writerow([
                f"{log.time[k]:.6f}", SIDE_NAMES[int(log.side[k])], int(log.vertex[k]),
                f"{log.position[k, 0]:.9f}", f"{log.position[k, 1]:.9f}",
                f"{log.position[k, 2]:.9f}", f"{log.f_normal[k]:.9f}",
                f"{log.f_tangential[k, 0]:.9f}", f"{log.f_tangential[k, 1]:.9f}",
                f"{log.penetration[k]:.9f}"])


def read_contact_csv(path: str | Path) -> ContactLog:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(r for r in fh if not r.startswith("#"))
        header = next(reader, None)
        if header != CONTACT_CSV_HEADER:
            raise ConfigError(f"unexpected contact log header {header}")
        for row in reader:
            rows.append(row)
    if not rows:
        return ContactLog()
    time = np.array([float(r[0]) for r in rows])
    side = np.array([SIDE_CODES[r[1]] for r in rows], dtype=np.int8)
    vertex = np.array([int(r[2]) for r in rows], dtype=np.int64)
    pos = np.array([[float(r[3]), float(r[4]), float(r[5])] for r in rows])
    fn = np.array([float(r[6]) for r in rows])
    ft = np.array([[float(r[7]), float(r[8])] for r in rows])
    pen = np.array([float(r[9]) for r in rows])
    return ContactLog(time, side, vertex, pos, fn, ft, pen)
