"""Synthetic walking and standing reference trajectories.

The walk is generated in joint space from an explicit sagittal foot locus:
each stance rolls heel -> flat -> toe about pivot points taken from the
foot geometry, and the swing interpolates to the next heel strike with
ground clearance. Hip and knee angles follow from planar two-link inverse
kinematics; the ankle angle realizes the designed world pitch of the foot.
The result is a deterministic reference that exercises alternating stance,
rolling contact and push-off without any learned controller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .mesh import FootMesh
from .retarget import JointTrajectory, finite_difference_velocities
from .skeleton import SkeletonModel, forward_sites

HIP_DROP = 0.05       # pelvis origin to hip joint, along -z
HIP_HALF_WIDTH = 0.09
THIGH_LEN = 0.42
SHANK_LEN = 0.41


@dataclass(frozen=True)
class GaitParams:
    """Shape parameters of the generated walk."""

    speed: float = 1.25          # m/s forward
    cycle_time: float = 1.1      # s per gait cycle
    duty: float = 0.60           # stance fraction of the cycle
    rate: float = 100.0          # Hz output sample rate
    n_cycles: int = 9
    lead_in: float = 1.0         # s of double-support standing before the walk
    pelvis_height: float = 0.88
    heel_strike_pitch: float = 0.20   # rad toes-up at initial contact
    toe_off_pitch: float = 0.55       # rad heel-up magnitude at toe off
    flat_phase: float = 0.12          # phase at which the foot is flat
    heel_off_phase: float = 0.38      # phase at which the heel starts rising
    swing_clearance: float = 0.055    # extra ankle lift at mid swing [m]

    def __post_init__(self):
        if not (0.0 < self.flat_phase < self.heel_off_phase < self.duty < 1.0):
            raise ConfigError("phases must satisfy 0 < flat < heel_off < duty < 1")
        if self.speed <= 0 or self.cycle_time <= 0 or self.rate <= 0:
            raise ConfigError("speed, cycle_time and rate must be positive")


@dataclass(frozen=True)
class _FootGeometry:
    heel_x: float   # heel pivot, attachment frame
    toe_x: float    # toe pivot, attachment frame
    sole_z: float   # contact plane height, attachment frame (negative)

    @staticmethod
    def from_mesh(mesh: FootMesh) -> "_FootGeometry":
        lo, hi = mesh.bounding_box()
        length = hi[0] - lo[0]
        return _FootGeometry(
            heel_x=float(lo[0] + 0.04 * length),
            toe_x=float(lo[0] + 0.92 * length),
            sole_z=mesh.sole_height(),
        )


def _smooth(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (s * (6.0 * s - 15.0) + 10.0)


def _pitch_rot(psi: float) -> np.ndarray:
    """Foot body->world rotation for a pure pitch: x maps to
    (cos psi, 0, sin psi), so positive pitch means toes up."""
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def _ankle_from_pivot(pivot_world: np.ndarray, pivot_body: np.ndarray,
                      psi: float) -> np.ndarray:
    return pivot_world - _pitch_rot(psi) @ pivot_body


class _LegPlan:
    """Sagittal ankle position and foot pitch for one leg over time."""

    def __init__(self, params: GaitParams, geom: _FootGeometry, phase0: float):
        self.p = params
        self.g = geom
        self.phase0 = phase0
        self.stride = params.speed * params.cycle_time

    def _flat_ankle_x(self, cycle: int) -> float:
        # stance foot is planted so that the pelvis passes over it at
        # mid-stance of the flat phase
        p = self.p
        t_strike = (cycle - self.phase0) * p.cycle_time
        return p.speed * (t_strike + 0.5 * p.duty * p.cycle_time)

    def pose(self, t_walk: float) -> tuple[np.ndarray, float]:
        """(ankle xz position, foot pitch) at walk time t_walk >= 0."""
        p, g = self.p, self.g
        total = t_walk / p.cycle_time + self.phase0
        cycle = int(np.floor(total))
        phi = total - cycle

        if phi < p.flat_phase:  # heel rocker
            psi = p.heel_strike_pitch * (1.0 - phi / p.flat_phase)
            heel_world = np.array([self._flat_ankle_x(cycle) + g.heel_x, 0.0])
            return self._planar(heel_world, np.array([g.heel_x, g.sole_z]), psi), psi
        if phi < p.heel_off_phase:  # flat foot
            psi = 0.0
            ankle = np.array([self._flat_ankle_x(cycle), -g.sole_z])
            return ankle, psi
        if phi < p.duty:  # toe rocker
            s = (phi - p.heel_off_phase) / (p.duty - p.heel_off_phase)
            psi = -p.toe_off_pitch * _smooth(s)
            toe_world = np.array([self._flat_ankle_x(cycle) + g.toe_x, 0.0])
            return self._planar(toe_world, np.array([g.toe_x, g.sole_z]), psi), psi

        # swing: from the toe-off pose to the next heel strike
        s = (phi - p.duty) / (1.0 - p.duty)
        psi_off = -p.toe_off_pitch
        psi_on = p.heel_strike_pitch
        toe_world = np.array([self._flat_ankle_x(cycle) + g.toe_x, 0.0])
        a0 = self._planar(toe_world, np.array([g.toe_x, g.sole_z]), psi_off)
        heel_world = np.array([self._flat_ankle_x(cycle + 1) + g.heel_x, 0.0])
        a1 = self._planar(heel_world, np.array([g.heel_x, g.sole_z]), psi_on)

        # pitch recovers early so the toes clear the ground
        psi = psi_off + (psi_on - psi_off) * _smooth(s ** 0.55)
        blend = _smooth(s)
        ankle = (1.0 - blend) * a0 + blend * a1
        ankle[1] += self.p.swing_clearance * np.sin(np.pi * s) ** 2
        return ankle, float(psi)

    @staticmethod
    def _planar(pivot_world_xz: np.ndarray, pivot_body_xz: np.ndarray,
                psi: float) -> np.ndarray:
        pv3 = np.array([pivot_world_xz[0], 0.0, pivot_world_xz[1]])
        pb3 = np.array([pivot_body_xz[0], 0.0, pivot_body_xz[1]])
        a = _ankle_from_pivot(pv3, pb3, psi)
        return np.array([a[0], a[2]])


def _leg_ik(dx: float, dz: float) -> tuple[float, float]:
    """Planar hip/knee angles for an ankle at (dx, dz) relative to the hip.

    dx is forward, dz downward-positive leg drop. Returns (hip_flexion,
    knee_flexion) with the knee bending backward.
    """
    l1, l2 = THIGH_LEN, SHANK_LEN
    d = float(np.hypot(dx, dz))
    d = min(d, 0.997 * (l1 + l2))
    d = max(d, abs(l1 - l2) * 1.02 + 1e-6)
    cos_int = (l1 * l1 + l2 * l2 - d * d) / (2.0 * l1 * l2)
    knee = np.pi - np.arccos(np.clip(cos_int, -1.0, 1.0))
    alpha = np.arctan2(dx, dz)
    beta = np.arccos(np.clip((l1 * l1 + d * d - l2 * l2) / (2.0 * l1 * d), -1.0, 1.0))
    hip = alpha + beta
    return float(hip), float(knee)


def generate_walk_trajectory(skel: SkeletonModel, mesh: FootMesh,
                             params: GaitParams | None = None) -> JointTrajectory:
    """Build the walking reference at the configured sample rate.

    During the lead-in the first walking pose is held statically (a double
    support stance); afterwards the pelvis advances at constant speed while
    the legs follow the foot-locus plan.
    """
    params = params or GaitParams()
    geom = _FootGeometry.from_mesh(mesh)
    legs = {
        "r": _LegPlan(params, geom, phase0=0.10),
        "l": _LegPlan(params, geom, phase0=0.60),
    }

    duration = params.lead_in + params.n_cycles * params.cycle_time
    n = int(round(duration * params.rate)) + 1
    times = np.arange(n) / params.rate

    idx = {name: k for k, name in
           enumerate(j.name for j in skel.joints)}
    q = np.zeros((n, skel.n_coords))
    root = np.zeros((n, 3))

    for k, t in enumerate(times):
        t_walk = max(0.0, t - params.lead_in)
        pelvis_x = params.speed * t_walk
        root[k] = [pelvis_x, 0.0, params.pelvis_height]
        hip_origin_z = params.pelvis_height - HIP_DROP
        for side in ("r", "l"):
            ankle_xz, psi = legs[side].pose(t_walk)
            dx = ankle_xz[0] - pelvis_x
            dz = hip_origin_z - ankle_xz[1]
            hip, knee = _leg_ik(dx, dz)
            ankle = psi - hip + knee
            q[k, idx[f"hip_flexion_{side}"]] = hip
            q[k, idx[f"knee_flexion_{side}"]] = knee
            q[k, idx[f"ankle_flexion_{side}"]] = ankle
            q[k, idx[f"mtp_flexion_{side}"]] = float(np.clip(-psi, 0.0, 1.0)) * 0.8

    lo, hi = skel.limits()
    q = np.clip(q, lo, hi)
    return JointTrajectory(rate=params.rate, q=q, root=root)


def generate_standing_trajectory(skel: SkeletonModel, mesh: FootMesh,
                                 duration: float = 3.0, rate: float = 100.0,
                                 pelvis_height: float = 0.88) -> JointTrajectory:
    """Constant double-support stance with both feet flat under the hips."""
    geom = _FootGeometry.from_mesh(mesh)
    dz = pelvis_height - HIP_DROP - (-geom.sole_z)
    hip, knee = _leg_ik(0.0, dz)
    ankle = 0.0 - hip + knee
    q0 = np.zeros(skel.n_coords)
    for side in ("r", "l"):
        names = {f"hip_flexion_{side}": hip, f"knee_flexion_{side}": knee,
                 f"ankle_flexion_{side}": ankle}
        for name, val in names.items():
            q0[[j.name for j in skel.joints].index(name)] = val
    n = int(round(duration * rate)) + 1
    q = np.tile(q0, (n, 1))
    root = np.tile([0.0, 0.0, pelvis_height], (n, 1))
    return JointTrajectory(rate=rate, q=q, root=root)


def trajectory_keypoints(skel: SkeletonModel, traj: JointTrajectory) -> np.ndarray:
    """Site positions of every trajectory frame, shape (T, 18, 3).

    This is the forward image of the trajectory; feeding it back through
    the retargeting solver should reproduce the joint angles up to the
    regularization bias.
    """
    out = np.empty((traj.n_frames, len(skel.sites), 3))
    for t in range(traj.n_frames):
        out[t] = forward_sites(skel, traj.q[t], traj.root[t])
    return out


def reference_with_velocities(traj: JointTrajectory) -> JointTrajectory:
    return finite_difference_velocities(traj)
