"""Time stepping for the deformable foot interface.

Each free vertex owns a single radial translational DoF in the body frame
of its attachment (the ankle). Edge-length equality constraints are
enforced with the impedance / reference-acceleration force law; the
attachment frame itself follows an externally prescribed pose, so the
mesh deforms passively in response to contact and gravity.

Stiff damping note: the constraint damping coefficient implied by the
default parameters exceeds the explicit-Euler stability bound at a 500 Hz
step for well-aligned edges, so the integrator treats each DoF's own
damping coefficient implicitly (a diagonal backward-Euler split). This
leaves equilibria and the force law untouched and keeps the update
deterministic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from weakref import WeakKeyDictionary

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import ConfigError, NumericalInstabilityError
from .mesh import FootMesh

log = logging.getLogger(__name__)

GRAVITY = 9.81  # m/s^2, along -z in the world frame
DEGENERATE_EDGE_LENGTH = 1e-9


@dataclass(frozen=True)
class SolverParams:
    """Contact/constraint solver configuration.

    accel_ref stores (-k_stiff, -k_damp); the force laws use the
    magnitudes. impedance is (d_min, d_max, width, midpoint, power).
    young_modulus and poisson_ratio are material metadata unless edge
    equality constraints are disabled, in which case the modulus sets the
    linear elastic edge stiffness k = E*pi*r^2/L0.

    attachment_enabled adds the compliant bone-attachment constraint: each
    free vertex is tethered to its rest radius by the same impedance /
    reference-acceleration law (violation u, rate u_dot). Without it a
    flat contact patch behaves like an unanchored drum head and caves in
    far enough to violate the strain budget under body weight.
    """

    timestep: float = 0.002
    young_modulus: float = 1.0e5
    poisson_ratio: float = 0.49
    accel_ref: tuple[float, float] = (-5.0e4, -1.0e3)
    impedance: tuple[float, float, float, float, float] = (0.1, 0.9, 0.001, 0.5, 2.0)
    edge_constraint_enabled: bool = True
    attachment_enabled: bool = True
    attachment_scale: float = 1.0
    substeps: int = 2
    force_cap: float = 1.0e5

    def __post_init__(self):
        d_min, d_max, width, midpoint, power = self.impedance
        if self.timestep <= 0:
            raise ConfigError("timestep must be positive")
        if not (0.0 <= d_min <= d_max <= 1.0):
            raise ConfigError("impedance endpoints must satisfy 0 <= d_min <= d_max <= 1")
        if width <= 0:
            raise ConfigError("impedance width must be positive")
        if not (0.0 < midpoint < 1.0):
            raise ConfigError("impedance midpoint must be in (0, 1)")
        if power < 1.0:
            raise ConfigError("impedance power must be >= 1")
        if self.substeps < 1:
            raise ConfigError("substeps must be >= 1")

    @property
    def k_stiff(self) -> float:
        return abs(self.accel_ref[0])

    @property
    def k_damp(self) -> float:
        return abs(self.accel_ref[1])


def impedance(violation, params: SolverParams):
    """Constraint impedance in [d_min, d_max] as a function of violation.

    A two-branch power smooth-step: d_min at zero violation, d_max at or
    beyond `width`, value (d_min+d_max)/2-like midpoint crossing at
    midpoint*width, monotone non-decreasing. Accepts scalars or arrays.
    """
    d_min, d_max, width, mid, power = params.impedance
    x = np.clip(np.asarray(violation, dtype=float) / width, 0.0, 1.0)
    lo = x ** power / mid ** (power - 1.0)
    hi = 1.0 - (1.0 - x) ** power / (1.0 - mid) ** (power - 1.0)
    y = np.where(x < mid, lo, hi)
    out = d_min + y * (d_max - d_min)
    return float(out) if np.isscalar(violation) else out


def reference_accel(violation, violation_rate, params: SolverParams):
    """Target constraint-space acceleration -(k*violation + b*rate)."""
    out = -(params.k_stiff * np.asarray(violation, dtype=float)
            + params.k_damp * np.asarray(violation_rate, dtype=float))
    return float(out) if np.isscalar(violation) and np.isscalar(violation_rate) else out


@dataclass(frozen=True)
class FramePose:
    """World pose (and optionally twist) of the attachment frame."""

    position: np.ndarray
    quaternion: np.ndarray  # (x, y, z, w), unit norm
    lin_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ang_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "quaternion", np.asarray(self.quaternion, dtype=float))
        object.__setattr__(self, "lin_vel", np.asarray(self.lin_vel, dtype=float))
        object.__setattr__(self, "ang_vel", np.asarray(self.ang_vel, dtype=float))
        n = float(np.linalg.norm(self.quaternion))
        if abs(n - 1.0) > 1e-9:
            raise ConfigError(f"frame quaternion norm {n} is not 1 within 1e-9")

    @staticmethod
    def identity() -> "FramePose":
        return FramePose(np.zeros(3), np.array([0.0, 0.0, 0.0, 1.0]))

    def rotation(self) -> np.ndarray:
        return Rotation.from_quat(self.quaternion).as_matrix()


@dataclass
class FlexState:
    """Radial displacements/velocities plus the attachment frame pose."""

    u: np.ndarray          # (V,) radial displacement [m], 0 at pinned vertices
    u_dot: np.ndarray      # (V,) radial velocity [m/s]
    pose: FramePose
    time: float = 0.0

    @staticmethod
    def rest(mesh: FootMesh, pose: FramePose | None = None) -> "FlexState":
        n = mesh.n_vertices
        return FlexState(np.zeros(n), np.zeros(n), pose or FramePose.identity())


def body_positions(mesh: FootMesh, state: FlexState) -> np.ndarray:
    """Body-frame vertex positions rest + u * radial_dir."""
    return mesh.vertices + state.u[:, None] * mesh.radial_dir


def world_positions(mesh: FootMesh, state: FlexState) -> np.ndarray:
    R = state.pose.rotation()
    return state.pose.position + body_positions(mesh, state) @ R.T


def world_velocities(mesh: FootMesh, state: FlexState) -> np.ndarray:
    """World vertex velocities including the frame twist."""
    R = state.pose.rotation()
    p_rel = body_positions(mesh, state) @ R.T
    v_body = (state.u_dot[:, None] * mesh.radial_dir) @ R.T
    return state.pose.lin_vel + np.cross(state.pose.ang_vel, p_rel) + v_body


class FlexDynamics:
    """Precomputed arrays and the stepping kernel for one foot."""

    def __init__(self, mesh: FootMesh, params: SolverParams):
        self.mesh = mesh
        self.params = params
        self.i = mesh.edges[:, 0]
        self.j = mesh.edges[:, 1]
        self.L0 = mesh.rest_lengths
        self.n = mesh.n_vertices
        self.free = mesh.free.copy()
        self.masses = np.full(self.n, mesh.vertex_mass)
        m_i, m_j = self.masses[self.i], self.masses[self.j]
        self.m_eff = 2.0 * m_i * m_j / (m_i + m_j)  # harmonic mean
        rest_vec = mesh.vertices[self.j] - mesh.vertices[self.i]
        self.rest_dir = rest_vec / np.linalg.norm(rest_vec, axis=1, keepdims=True)
        self.elastic_k = (params.young_modulus * np.pi * mesh.vertex_radius ** 2
                          / self.L0)
        self.cap_events = 0
        self.degenerate_events = 0

    def _edge_terms(self, u: np.ndarray, u_dot: np.ndarray):
        """Per-edge force scalar and projection geometry at the given state."""
        p = self.mesh.vertices + u[:, None] * self.mesh.radial_dir
        d = p[self.j] - p[self.i]
        L = np.linalg.norm(d, axis=1)
        bad = L < DEGENERATE_EDGE_LENGTH
        if bad.any():
            self.degenerate_events += int(bad.sum())
            log.warning("%d degenerate edge(s); using rest direction", int(bad.sum()))
        n_hat = np.where(bad[:, None], self.rest_dir, d / np.maximum(L, DEGENERATE_EDGE_LENGTH)[:, None])
        r = L - self.L0
        v = u_dot[:, None] * self.mesh.radial_dir
        r_dot = np.einsum("ij,ij->i", n_hat, v[self.j] - v[self.i])
        proj_i = np.einsum("ij,ij->i", n_hat, self.mesh.radial_dir[self.i])
        proj_j = np.einsum("ij,ij->i", n_hat, self.mesh.radial_dir[self.j])

        if self.params.edge_constraint_enabled:
            d_imp = impedance(np.abs(r), self.params)
            a_ref = reference_accel(r, r_dot, self.params)
            s = self.m_eff * d_imp * a_ref  # force on j along n_hat; i gets -s
            c_edge = self.m_eff * d_imp * self.params.k_damp
        else:
            s = -self.elastic_k * r
            c_edge = np.zeros_like(s)
        return s, c_edge, proj_i, proj_j, r, n_hat

    def generalized_edge_forces(self, u: np.ndarray, u_dot: np.ndarray):
        """Radial generalized forces from the edge constraints, plus the
        per-DoF damping diagonal used by the implicit velocity update."""
        s, c_edge, proj_i, proj_j, _, _ = self._edge_terms(u, u_dot)
        g = (np.bincount(self.i, weights=-s * proj_i, minlength=self.n)
             + np.bincount(self.j, weights=s * proj_j, minlength=self.n))
        c_diag = (np.bincount(self.i, weights=c_edge * proj_i ** 2, minlength=self.n)
                  + np.bincount(self.j, weights=c_edge * proj_j ** 2, minlength=self.n))
        return g, c_diag

    def attachment_forces(self, u: np.ndarray, u_dot: np.ndarray):
        """Compliant bone-attachment restoring forces on the radial DoFs.

        Each free vertex is held near its rest radius: violation u, rate
        u_dot, force = scale * impedance(|u|) * m * reference_accel(u, u_dot).
        Returns the forces and the damping diagonal for the implicit update.
        """
        params = self.params
        if not params.attachment_enabled:
            return np.zeros(self.n), np.zeros(self.n)
        d_imp = impedance(np.abs(u), params) * params.attachment_scale
        g = self.masses * d_imp * reference_accel(u, u_dot, params)
        c = self.masses * d_imp * params.k_damp
        g[~self.free] = 0.0
        c[~self.free] = 0.0
        return g, c

    def step(self, state: FlexState, contact_forces: np.ndarray,
             next_pose: FramePose) -> FlexState:
        """Advance one solver timestep under fixed external forces.

        contact_forces: (V, 3) world-frame force vectors applied at the
        vertices; they and gravity are projected onto each vertex's world
        radial direction. The internal edge dynamics run on `substeps`
        symplectic-Euler substeps.
        """
        params = self.params
        R = state.pose.rotation()
        world_radial = self.mesh.radial_dir @ R.T
        g_ext = np.einsum("ij,ij->i", np.asarray(contact_forces, dtype=float), world_radial)
        g_ext = g_ext + self.masses * (-GRAVITY) * world_radial[:, 2]

        u = state.u.copy()
        u_dot = state.u_dot.copy()
        dt_s = params.timestep / params.substeps
        inv_m = 1.0 / self.masses

        for _ in range(params.substeps):
            g_edge, c_diag = self.generalized_edge_forces(u, u_dot)
            g_att, c_att = self.attachment_forces(u, u_dot)
            c_diag = c_diag + c_att
            f = g_edge + g_att + g_ext
            over = np.abs(f) > params.force_cap
            if over.any():
                self.cap_events += int(over.sum())
                log.warning("capped %d generalized force(s) at %.0e N",
                            int(over.sum()), params.force_cap)
                f = np.clip(f, -params.force_cap, params.force_cap)
            # own-velocity damping handled implicitly (see module docstring)
            denom = 1.0 + dt_s * inv_m * c_diag
            u_dot = (u_dot + dt_s * inv_m * (f + c_diag * u_dot)) / denom
            u_dot[~self.free] = 0.0
            u = u + dt_s * u_dot
            u[~self.free] = 0.0

        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(u_dot))):
            raise NumericalInstabilityError(
                "non-finite flex state", step=int(round(state.time / params.timestep)))
        return FlexState(u=u, u_dot=u_dot, pose=next_pose,
                         time=state.time + params.timestep)


_dynamics_cache: "WeakKeyDictionary[FootMesh, dict]" = WeakKeyDictionary()


def _dynamics_for(mesh: FootMesh, params: SolverParams) -> FlexDynamics:
    per_mesh = _dynamics_cache.setdefault(mesh, {})
    dyn = per_mesh.get(params)
    if dyn is None:
        dyn = per_mesh[params] = FlexDynamics(mesh, params)
    return dyn


def edge_constraint_forces(mesh: FootMesh, state: FlexState,
                           params: SolverParams) -> np.ndarray:
    """Per-vertex radial generalized forces from the edge-length constraints."""
    g, _ = _dynamics_for(mesh, params).generalized_edge_forces(state.u, state.u_dot)
    return g


def edge_violations(mesh: FootMesh, state: FlexState) -> np.ndarray:
    """Signed length errors L - L0 for every edge at the given state."""
    p = body_positions(mesh, state)
    L = np.linalg.norm(p[mesh.edges[:, 1]] - p[mesh.edges[:, 0]], axis=1)
    return L - mesh.rest_lengths


def step(mesh: FootMesh, state: FlexState, contact_forces: np.ndarray,
         params: SolverParams, next_frame_pose: FramePose) -> FlexState:
    """Single-step convenience wrapper around a cached FlexDynamics."""
    return _dynamics_for(mesh, params).step(state, contact_forces, next_frame_pose)
