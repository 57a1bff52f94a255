"""Prescribed-motion playback of retargeted trajectories.

Both foot models (deformable mesh and rigid sphere layout) are driven by
the same joint trajectory through forward kinematics. Horizontal motion
and orientation follow the reference exactly; the vertical axis can run in
"loaded" mode, where a supported body mass rides on the total ground
reaction force, so standing and walking settle into force balance instead
of fighting a kinematic constraint. Reward terms mirroring the tracking
objectives are evaluated offline from the logs.
"""

from __future__ import annotations

import csv
import time as _time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .contact import (ContactLog, ContactLogBuilder, ContactParams, RigidFootLayout,
                      compute_vertex_contacts, default_rigid_layout,
                      rigid_baseline_contacts)
from .errors import ConfigError, NumericalInstabilityError
from .mesh import FootMesh
from .retarget import JointTrajectory
from .skeleton import SkeletonModel, default_skeleton, frame_kinematics
from .solver import GRAVITY, FlexDynamics, FlexState, FramePose, SolverParams

FOOT_JOINTS = {"right": "ankle_adduction_r", "left": "ankle_adduction_l"}


@dataclass(frozen=True)
class RewardWeights:
    """Weights of the tracking-objective terms."""

    w_q: float = 50.0
    w_qdot: float = 0.1
    w_act: float = 1.0
    w_vel: float = 5.0
    w_healthy: float = 100.0

    def __post_init__(self):
        if min(self.w_q, self.w_qdot, self.w_act, self.w_vel, self.w_healthy) < 0:
            raise ConfigError("reward weights must be non-negative")


@dataclass(frozen=True)
class RewardKernels:
    """Functional forms behind each reward term (documented defaults).

    r_q        = exp(-q_error_scale * mean(joint error^2))
    r_qdot     = exp(-qdot_error_scale * mean(velocity error^2))
    r_act      = -mean(activation^2)
    r_vel      = exp(-(v_x - v_target)^2 / vel_denom)
    r_healthy  = 1 if pelvis height in [z_lo, z_hi] and trunk tilt < tilt_max
    """

    q_error_scale: float = 5.0
    qdot_error_scale: float = 0.1
    vel_denom: float = 0.25
    healthy_z: tuple[float, float] = (0.7, 1.1)
    healthy_tilt: float = np.pi / 6.0


@dataclass(frozen=True)
class Segment:
    """A rigid body segment for energy accounting."""

    name: str
    joint: str              # coordinate frame the segment rides
    com_offset: tuple[float, float, float]
    mass: float             # kg
    inertia: tuple[float, float, float] | None  # principal diag, kg m^2


# anthropometric mass fractions (arms folded into the thorax segment)
_SEGMENT_FRACTIONS = [
    ("pelvis", "pelvis_rotation", (0.0, 0.0, 0.0), 0.142, (0.10, 0.09, 0.09)),
    ("lumbar_trunk", "lumbar_rotation", (0.0, 0.0, 0.09), 0.139, (0.12, 0.10, 0.08)),
    ("thorax_arms", "thorax_rotation", (0.0, 0.0, 0.12), 0.316, (0.45, 0.35, 0.20)),
    ("head_neck", "neck_rotation", (0.0, 0.0, 0.10), 0.081, (0.03, 0.03, 0.02)),
    ("thigh_r", "hip_rotation_r", (0.0, 0.0, -0.18), 0.100, (0.15, 0.15, 0.03)),
    ("thigh_l", "hip_rotation_l", (0.0, 0.0, -0.18), 0.100, (0.15, 0.15, 0.03)),
    ("shank_r", "knee_rotation_r", (0.0, 0.0, -0.18), 0.0465, (0.05, 0.05, 0.007)),
    ("shank_l", "knee_rotation_l", (0.0, 0.0, -0.18), 0.0465, (0.05, 0.05, 0.007)),
    ("foot_r", "ankle_adduction_r", (0.06, 0.0, -0.07), 0.0145, (0.004, 0.004, 0.002)),
    ("foot_l", "ankle_adduction_l", (0.06, 0.0, -0.07), 0.0145, (0.004, 0.004, 0.002)),
]


def default_segments(total_mass: float = 70.0) -> list[Segment]:
    return [Segment(name, joint, off, frac * total_mass, inertia)
            for name, joint, off, frac, inertia in _SEGMENT_FRACTIONS]


@dataclass(frozen=True)
class PlaybackConfig:
    control_rate: float = 50.0
    sim_rate: float = 500.0
    model: str = "deformable"            # deformable | rigid
    vertical_mode: str = "loaded"        # loaded | prescribed
    supported_mass: float = 70.0         # kg riding on the feet in loaded mode
    frame_damping: float = 300.0         # N s/m vertical damping of the load
    target_speed: float = 1.25           # m/s
    total_mass: float = 70.0             # kg, segment table scale
    solver: SolverParams = field(default_factory=SolverParams)
    contact: ContactParams = field(default_factory=ContactParams)
    rigid_sphere_radius: float = 0.01
    rigid_contact_mass: float = 1.0

    def __post_init__(self):
        ratio = self.sim_rate / self.control_rate
        if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
            raise ConfigError("sim_rate must be an integer multiple of control_rate")
        if self.model not in ("deformable", "rigid"):
            raise ConfigError(f"unknown model variant {self.model!r}")
        if self.vertical_mode not in ("loaded", "prescribed"):
            raise ConfigError(f"unknown vertical mode {self.vertical_mode!r}")
        if abs(self.solver.timestep * self.sim_rate - 1.0) > 1e-9:
            raise ConfigError("solver timestep must equal 1/sim_rate")

    @property
    def steps_per_tick(self) -> int:
        return int(round(self.sim_rate / self.control_rate))


@dataclass
class StateLog:
    """Simulation-rate body state log."""

    time: np.ndarray
    q: np.ndarray               # (T, 33) realized joint angles
    qdot: np.ndarray            # (T, 33)
    root_pos: np.ndarray        # (T, 3) pelvis origin, world
    root_vel: np.ndarray        # (T, 3)
    trunk_tilt: np.ndarray      # (T,) rad from vertical
    com_pos: np.ndarray         # (T, 3) whole-body center of mass
    com_vel: np.ndarray         # (T, 3)
    seg_pos: np.ndarray         # (T, S, 3) segment COM positions
    seg_vel: np.ndarray         # (T, S, 3)
    seg_angvel: np.ndarray      # (T, S, 3) world angular velocities
    seg_rot: np.ndarray         # (T, S, 4) segment quaternions (x, y, z, w)
    z_offset: np.ndarray        # (T,) vertical compliance offset
    total_grf_z: np.ndarray     # (T,) summed vertical ground reaction
    segment_names: list[str] = field(default_factory=list)
    truncated: bool = False

    def __len__(self):
        return len(self.time)

    def masked(self, m: np.ndarray) -> "StateLog":
        return StateLog(self.time[m], self.q[m], self.qdot[m], self.root_pos[m],
                        self.root_vel[m], self.trunk_tilt[m], self.com_pos[m],
                        self.com_vel[m], self.seg_pos[m], self.seg_vel[m],
                        self.seg_angvel[m], self.seg_rot[m], self.z_offset[m],
                        self.total_grf_z[m], self.segment_names, self.truncated)


@dataclass
class FlexLog:
    """Per-vertex radial state history of one deformable foot."""

    time: np.ndarray      # (T,)
    u: np.ndarray         # (T, V)
    u_dot: np.ndarray     # (T, V)
    frame_pos: np.ndarray   # (T, 3)
    frame_quat: np.ndarray  # (T, 4)


@dataclass
class PlaybackResult:
    model: str
    state: StateLog
    contacts: ContactLog
    flex: dict[str, FlexLog]
    meshes: dict[str, FootMesh]
    config: PlaybackConfig
    wall_time: float
    truncated: bool = False


def _angular_velocities(R_seq: np.ndarray, dt: float) -> np.ndarray:
    """World angular velocity from a (T, 3, 3) rotation sequence."""
    T = len(R_seq)
    if T < 2:
        return np.zeros((T, 3))
    r = Rotation.from_matrix(R_seq)
    rel = r[1:] * r[:-1].inv()
    w = rel.as_rotvec() * (1.0 / dt)
    return np.vstack([w[:1], w])


def _interp_columns(t_new: np.ndarray, t_old: np.ndarray, arr: np.ndarray) -> np.ndarray:
    out = np.empty((len(t_new), arr.shape[1]))
    for c in range(arr.shape[1]):
        out[:, c] = np.interp(t_new, t_old, arr[:, c])
    return out


def run_playback(traj: JointTrajectory, meshes: dict[str, FootMesh],
                 config: PlaybackConfig | None = None,
                 skel: SkeletonModel | None = None,
                 duration: float | None = None,
                 progress=None) -> PlaybackResult:
    """Drive the selected foot model along the trajectory and log everything.

    meshes maps "right"/"left" to FootMesh instances (also used to place
    the rigid baseline layout). Interrupting the run (KeyboardInterrupt)
    returns the logs accumulated so far with `truncated` set.
    """
    t_start = _time.perf_counter()
    config = config or PlaybackConfig()
    skel = skel or default_skeleton()
    if set(meshes) != {"right", "left"}:
        raise ConfigError("meshes must map exactly 'right' and 'left'")

    dt = 1.0 / config.sim_rate
    horizon = traj.duration if duration is None else min(duration, traj.duration)
    n_steps = int(np.floor(horizon * config.sim_rate)) + 1
    times = np.arange(n_steps) * dt

    # --- kinematic pre-pass ------------------------------------------------
    t_ref = traj.times()
    q_s = _interp_columns(times, t_ref, traj.q)
    root_s = _interp_columns(times, t_ref, traj.root)
    if traj.qdot is not None:
        qd_s = _interp_columns(times, t_ref, traj.qdot)
    else:
        qd_s = np.gradient(q_s, dt, axis=0, edge_order=2) if n_steps >= 3 else \
            np.zeros_like(q_s)

    segments = default_segments(config.total_mass)
    seg_joint = [skel.joint_index(s.joint) for s in segments]
    seg_off = np.array([s.com_offset for s in segments])
    foot_joint = {side: skel.joint_index(name) for side, name in FOOT_JOINTS.items()}
    thorax = skel.joint_index("thorax_rotation")

    S = len(segments)
    seg_pos = np.empty((n_steps, S, 3))
    seg_R = np.empty((n_steps, S, 3, 3))
    foot_p = {side: np.empty((n_steps, 3)) for side in ("right", "left")}
    foot_R = {side: np.empty((n_steps, 3, 3)) for side in ("right", "left")}
    trunk_tilt = np.empty(n_steps)

    for k in range(n_steps):
        R, p = frame_kinematics(skel, q_s[k], root_s[k])
        for s in range(S):
            j = seg_joint[s]
            seg_pos[k, s] = p[j] + R[j] @ seg_off[s]
            seg_R[k, s] = R[j]
        for side in ("right", "left"):
            foot_p[side][k] = p[foot_joint[side]]
            foot_R[side][k] = R[foot_joint[side]]
        trunk_tilt[k] = np.arccos(np.clip(R[thorax][2, 2], -1.0, 1.0))

    seg_vel = (np.gradient(seg_pos, dt, axis=0, edge_order=2)
               if n_steps >= 3 else np.zeros_like(seg_pos))
    seg_angvel = np.empty_like(seg_pos)
    for s in range(S):
        seg_angvel[:, s] = _angular_velocities(seg_R[:, s], dt)
    seg_quat = np.empty((n_steps, S, 4))
    for s in range(S):
        seg_quat[:, s] = Rotation.from_matrix(seg_R[:, s]).as_quat()

    foot_v = {side: (np.gradient(foot_p[side], dt, axis=0, edge_order=2)
                     if n_steps >= 3 else np.zeros_like(foot_p[side]))
              for side in ("right", "left")}
    foot_w = {side: _angular_velocities(foot_R[side], dt) for side in ("right", "left")}
    foot_quat = {side: Rotation.from_matrix(foot_R[side]).as_quat()
                 for side in ("right", "left")}

    root_vel = (np.gradient(root_s, dt, axis=0, edge_order=2)
                if n_steps >= 3 else np.zeros_like(root_s))

    # --- dynamic loop -------------------------------------------------------
    deformable = config.model == "deformable"
    builder = ContactLogBuilder()
    z_off = np.zeros(n_steps)
    z_vel = np.zeros(n_steps)
    total_grf = np.zeros(n_steps)

    dynamics: dict[str, FlexDynamics] = {}
    states: dict[str, FlexState] = {}
    flex_u: dict[str, np.ndarray] = {}
    flex_ud: dict[str, np.ndarray] = {}
    layouts: dict[str, RigidFootLayout] = {}

    def pose_at(side: str, k: int, dz: float, dzv: float) -> FramePose:
        pos = foot_p[side][k].copy()
        pos[2] += dz
        vel = foot_v[side][k].copy()
        vel[2] += dzv
        return FramePose(pos, foot_quat[side][k], vel, foot_w[side][k])

    if deformable:
        for side in ("right", "left"):
            dynamics[side] = FlexDynamics(meshes[side], config.solver)
            states[side] = FlexState.rest(meshes[side], pose_at(side, 0, 0.0, 0.0))
            flex_u[side] = np.zeros((n_steps, meshes[side].n_vertices))
            flex_ud[side] = np.zeros((n_steps, meshes[side].n_vertices))
    else:
        for side in ("right", "left"):
            layouts[side] = default_rigid_layout(
                meshes[side], radius=config.rigid_sphere_radius,
                contact_mass=config.rigid_contact_mass)

    loaded = config.vertical_mode == "loaded"
    dz, dzv = 0.0, 0.0
    n_sub = config.steps_per_tick
    steps_done = 0
    truncated = False

    try:
        for k in range(n_steps):
            # control-tick boundary: nothing re-planned in open-loop playback,
            # but the loop structure guarantees sim_rate/control_rate substeps
            if progress is not None and k % n_sub == 0:
                progress(k, n_steps)

            step_fz = 0.0
            forces: dict[str, np.ndarray] = {}
            for side in ("right", "left"):
                if deformable:
                    st = states[side]
                    st.pose = pose_at(side, k, dz, dzv)
                    (idx, pos, fn, ft, pen), farr = compute_vertex_contacts(
                        meshes[side], st, config.solver, config.contact)
                    forces[side] = farr
                else:
                    idx, pos, fn, ft, pen = rigid_baseline_contacts(
                        pose_at(side, k, dz, dzv), layouts[side],
                        config.solver, config.contact)
                builder.add(times[k], side, idx, pos, fn, ft, pen)
                step_fz += float(np.sum(fn))

            total_grf[k] = step_fz
            z_off[k], z_vel[k] = dz, dzv

            if loaded:
                acc = (step_fz - config.supported_mass * GRAVITY
                       - config.frame_damping * dzv) / config.supported_mass
                dzv = dzv + dt * acc
                dz = dz + dt * dzv
                if not np.isfinite(dz):
                    raise NumericalInstabilityError("vertical compliance diverged",
                                                    step=k)

            if deformable:
                for side in ("right", "left"):
                    flex_u[side][k] = states[side].u
                    flex_ud[side][k] = states[side].u_dot
                if k + 1 < n_steps:
                    for side in ("right", "left"):
                        nxt = pose_at(side, k + 1, dz, dzv)
                        states[side] = dynamics[side].step(states[side], forces[side], nxt)
            steps_done = k + 1
    except KeyboardInterrupt:
        truncated = True
        n_steps = steps_done
        times = times[:n_steps]

    sl = slice(0, steps_done if truncated else n_steps)
    masses = np.array([s.mass for s in segments])
    seg_pos_out = seg_pos[sl].copy()
    seg_vel_out = seg_vel[sl].copy()
    seg_pos_out[:, :, 2] += z_off[sl, None]
    seg_vel_out[:, :, 2] += z_vel[sl, None]
    com = np.einsum("s,tsi->ti", masses, seg_pos_out) / masses.sum()
    com_vel = np.einsum("s,tsi->ti", masses, seg_vel_out) / masses.sum()
    root_pos_out = root_s[sl].copy()
    root_pos_out[:, 2] += z_off[sl]
    root_vel_out = root_vel[sl].copy()
    root_vel_out[:, 2] += z_vel[sl]

    state_log = StateLog(
        time=times[sl], q=q_s[sl], qdot=qd_s[sl], root_pos=root_pos_out,
        root_vel=root_vel_out, trunk_tilt=trunk_tilt[sl], com_pos=com,
        com_vel=com_vel, seg_pos=seg_pos_out, seg_vel=seg_vel_out,
        seg_angvel=seg_angvel[sl], seg_rot=seg_quat[sl], z_offset=z_off[sl],
        total_grf_z=total_grf[sl], segment_names=[s.name for s in segments],
        truncated=truncated)

    flex_logs = {}
    if deformable:
        for side in ("right", "left"):
            flex_logs[side] = FlexLog(
                time=times[sl], u=flex_u[side][sl], u_dot=flex_ud[side][sl],
                frame_pos=foot_p[side][sl] + np.column_stack(
                    [np.zeros((len(times[sl]), 2)), z_off[sl]]),
                frame_quat=foot_quat[side][sl])

    return PlaybackResult(model=config.model, state=state_log,
                          contacts=builder.build(), flex=flex_logs, meshes=meshes,
                          config=config, wall_time=_time.perf_counter() - t_start,
                          truncated=truncated)


# ---------------------------------------------------------------------------
# reward terms
# ---------------------------------------------------------------------------

@dataclass
class RewardBreakdown:
    time: np.ndarray
    r_q: np.ndarray
    r_qdot: np.ndarray
    r_act: np.ndarray
    r_vel: np.ndarray
    r_healthy: np.ndarray
    total: np.ndarray
    weights: RewardWeights


def reward_terms(state: StateLog, reference: JointTrajectory,
                 activations: np.ndarray | None = None,
                 weights: RewardWeights | None = None,
                 kernels: RewardKernels | None = None,
                 target_speed: float = 1.25) -> RewardBreakdown:
    """Per-step tracking reward breakdown evaluated against a reference.

    The reference is sampled at the log times; it must span them. The
    total is exactly the weighted sum of the five terms at every step.
    """
    weights = weights or RewardWeights()
    kernels = kernels or RewardKernels()
    T = len(state)
    if reference.qdot is None:
        raise ConfigError("reference trajectory needs velocities")
    if state.time[-1] > reference.duration + 1e-9:
        raise ConfigError("reference does not span the state log")
    if activations is None:
        activations = np.zeros((T, 1))
    activations = np.atleast_2d(np.asarray(activations, dtype=float))
    if activations.shape[0] == 1 and T > 1:
        activations = activations.T
    if len(activations) != T:
        raise ConfigError(f"activations length {len(activations)} does not match "
                          f"log length {T}")

    t_ref = reference.times()
    ref_q = _interp_columns(state.time, t_ref, reference.q)
    ref_qd = _interp_columns(state.time, t_ref, reference.qdot)

    q_mse = np.mean((state.q - ref_q) ** 2, axis=1)
    qd_mse = np.mean((state.qdot - ref_qd) ** 2, axis=1)
    r_q = np.exp(-kernels.q_error_scale * q_mse)
    r_qdot = np.exp(-kernels.qdot_error_scale * qd_mse)
    r_act = -np.mean(activations ** 2, axis=1)
    vx = state.root_vel[:, 0]
    r_vel = np.exp(-((vx - target_speed) ** 2) / kernels.vel_denom)
    z = state.root_pos[:, 2]
    healthy = ((z >= kernels.healthy_z[0]) & (z <= kernels.healthy_z[1])
               & (state.trunk_tilt < kernels.healthy_tilt))
    r_healthy = healthy.astype(float)

    total = (weights.w_q * r_q + weights.w_qdot * r_qdot + weights.w_act * r_act
             + weights.w_vel * r_vel + weights.w_healthy * r_healthy)
    return RewardBreakdown(state.time.copy(), r_q, r_qdot, r_act, r_vel,
                           r_healthy, total, weights)


# ---------------------------------------------------------------------------
# log serialization
# ---------------------------------------------------------------------------

def save_state_npz(state: StateLog, path: str | Path) -> None:
    np.savez_compressed(
        path, time=state.time, q=state.q, qdot=state.qdot, root_pos=state.root_pos,
        root_vel=state.root_vel, trunk_tilt=state.trunk_tilt, com_pos=state.com_pos,
        com_vel=state.com_vel, seg_pos=state.seg_pos, seg_vel=state.seg_vel,
        seg_angvel=state.seg_angvel, seg_rot=state.seg_rot, z_offset=state.z_offset,
        total_grf_z=state.total_grf_z,
        segment_names=np.array(state.segment_names),
        truncated=np.array(state.truncated))


def load_state_npz(path: str | Path) -> StateLog:
    d = np.load(path, allow_pickle=False)
    return StateLog(
        time=d["time"], q=d["q"], qdot=d["qdot"], root_pos=d["root_pos"],
        root_vel=d["root_vel"], trunk_tilt=d["trunk_tilt"], com_pos=d["com_pos"],
        com_vel=d["com_vel"], seg_pos=d["seg_pos"], seg_vel=d["seg_vel"],
        seg_angvel=d["seg_angvel"], seg_rot=d["seg_rot"], z_offset=d["z_offset"],
        total_grf_z=d["total_grf_z"],
        segment_names=[str(s) for s in d["segment_names"]],
        truncated=bool(d["truncated"]))


def write_state_csv(state: StateLog, path: str | Path,
                    comments: list[str] | None = None) -> None:
    """Flat CSV of the body-state log (one row per simulation step)."""
    seg_cols = []
    for name in state.segment_names:
        for kind in ("pos", "vel", "angvel"):
            seg_cols += [f"{name}_{kind}_{ax}" for ax in "xyz"]
    header = (["time"]
              + [f"q_{i}" for i in range(state.q.shape[1])]
              + [f"qd_{i}" for i in range(state.q.shape[1])]
              + ["root_x", "root_y", "root_z", "rootv_x", "rootv_y", "rootv_z",
                 "trunk_tilt", "com_x", "com_y", "com_z",
                 "comv_x", "comv_y", "comv_z", "z_offset", "total_grf_z"]
              + seg_cols)
    with open(path, "w", newline="") as fh:
        for c in comments or []:
            fh.write(f"# {c}\n")
        if state.truncated:
            fh.write("# truncated true\n")
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(len(state)):
            seg_flat = np.concatenate([
                np.concatenate([state.seg_pos[k, s], state.seg_vel[k, s],
                                state.seg_angvel[k, s]])
                for s in range(state.seg_pos.shape[1])])
            row = np.concatenate([
                [state.time[k]], state.q[k], state.qdot[k], state.root_pos[k],
                state.root_vel[k], [state.trunk_tilt[k]], state.com_pos[k],
                state.com_vel[k], [state.z_offset[k], state.total_grf_z[k]],
                seg_flat])
            w.writerow([f"{v:.9f}" for v in row])


def save_flex_npz(flex: FlexLog, path: str | Path) -> None:
    np.savez_compressed(path, time=flex.time, u=flex.u, u_dot=flex.u_dot,
                        frame_pos=flex.frame_pos, frame_quat=flex.frame_quat)


def load_flex_npz(path: str | Path) -> FlexLog:
    d = np.load(path, allow_pickle=False)
    return FlexLog(time=d["time"], u=d["u"], u_dot=d["u_dot"],
                   frame_pos=d["frame_pos"], frame_quat=d["frame_quat"])


def write_flex_csv(flex: FlexLog, path: str | Path,
                   comments: list[str] | None = None) -> None:
    """Long-format CSV (time, vertex, u, u_dot) of a flex trajectory."""
    with open(path, "w", newline="") as fh:
        for c in comments or []:
            fh.write(f"# {c}\n")
        w = csv.writer(fh)
        w.writerow(["time", "vertex", "u", "u_dot"])
        for k in range(len(flex.time)):
            for v in range(flex.u.shape[1]):
                w.writerow([f"{flex.time[k]:.6f}", v,
                            f"{flex.u[k, v]:.9f}", f"{flex.u_dot[k, v]:.9f}"])


def write_reward_csv(rb: RewardBreakdown, path: str | Path,
                     comments: list[str] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        for c in comments or []:
            fh.write(f"# {c}\n")
        w = csv.writer(fh)
        w.writerow(["time", "r_q", "r_qdot", "r_act", "r_vel", "r_healthy", "total"])
        for k in range(len(rb.time)):
            w.writerow([f"{rb.time[k]:.6f}", f"{rb.r_q[k]:.9f}", f"{rb.r_qdot[k]:.9f}",
                        f"{rb.r_act[k]:.9f}", f"{rb.r_vel[k]:.9f}",
                        f"{rb.r_healthy[k]:.9f}", f"{rb.total[k]:.9f}"])
