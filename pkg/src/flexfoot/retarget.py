"""Keypoint-to-joint-space retargeting and trajectory conditioning.

Each frame solves a damped-least-squares fit of the 33 joint angles to the
18 tracked site positions, warm-started from the previous frame. The
resulting trajectories are resampled to a common rate, zero-phase
low-pass filtered, and augmented with finite-difference velocities.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import butter, filtfilt

from .errors import ConfigError
from .skeleton import SkeletonModel, forward_sites, sites_and_jacobian

DEFAULT_LAMBDA = 1e-4
DEFAULT_MU_DLS = 1e-6
STEP_TOLERANCE = 1e-6  # rad
MAX_ITERATIONS = 100


@dataclass
class JointTrajectory:
    """Joint-angle time series at a uniform sample rate.

    q: (T, 33) joint angles [rad]
    root: (T, 3) global translation [m]
    qdot: (T, 33) joint velocities [rad/s], None until computed
    """

    rate: float
    q: np.ndarray
    root: np.ndarray
    qdot: np.ndarray | None = None

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.root = np.asarray(self.root, dtype=float)
        if self.rate <= 0:
            raise ConfigError("sample rate must be positive")
        if self.q.ndim != 2 or len(self.q) != len(self.root):
            raise ConfigError("q and root must have matching frame counts")

    @property
    def n_frames(self) -> int:
        return len(self.q)

    @property
    def duration(self) -> float:
        return (self.n_frames - 1) / self.rate

    def times(self) -> np.ndarray:
        return np.arange(self.n_frames) / self.rate


@dataclass
class FrameSolveResult:
    q: np.ndarray
    converged: bool
    iterations: int
    objective: float
    site_residual: float            # max per-site position error [m]
    objective_history: list[float] = field(default_factory=list)


def _objective(sites: np.ndarray, targets: np.ndarray, q: np.ndarray,
               lam: float) -> float:
    return float(np.sum((sites - targets) ** 2) + lam * np.sum(q ** 2))


def _solve_single(skel: SkeletonModel, targets: np.ndarray, q_init: np.ndarray,
                  lam: float, root: np.ndarray, mu_dls: float,
                  ancestors: np.ndarray) -> FrameSolveResult:
    lo, hi = skel.limits()
    q = np.clip(np.asarray(q_init, dtype=float), lo, hi)
    sites, J = sites_and_jacobian(skel, q, root, ancestors)
    obj = _objective(sites, targets, q, lam)
    history = [obj]
    converged = False
    iterations = 0
    eye = np.eye(skel.n_coords)
    mu = mu_dls

    for iterations in range(1, MAX_ITERATIONS + 1):
        r = (targets - sites).ravel()
        A = J.T @ J + (lam + mu) * eye
        dq = np.linalg.solve(A, J.T @ r)

        alpha = 1.0
        accepted = False
        for _ in range(20):
            q_try = np.clip(q + alpha * dq, lo, hi)
            sites_try, J_try = sites_and_jacobian(skel, q_try, root, ancestors)
            obj_try = _objective(sites_try, targets, q_try, lam)
            if obj_try <= obj:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # flatten the step and retry; give up once heavily damped
            if mu < 1.0:
                mu *= 10.0
                continue
            converged = True
            break
        mu = max(mu_dls, mu * 0.25)

        step = float(np.linalg.norm(q_try - q))
        q, sites, J, obj = q_try, sites_try, J_try, obj_try
        history.append(obj)
        if step < STEP_TOLERANCE:
            converged = True
            break

    residual = float(np.max(np.linalg.norm(sites - targets, axis=1)))
    return FrameSolveResult(q=q, converged=converged, iterations=iterations,
                            objective=obj, site_residual=residual,
                            objective_history=history)


def solve_frame(skel: SkeletonModel, targets: np.ndarray, q_init: np.ndarray,
                lam: float = DEFAULT_LAMBDA, root_translation: np.ndarray | None = None,
                mu_dls: float = DEFAULT_MU_DLS,
                ancestors: np.ndarray | None = None,
                restarts: int = 8,
                restart_residual: float = 1e-4) -> FrameSolveResult:
    """Damped-least-squares fit of one frame.

    Iterates dq = (J^T J + (lam + mu) I)^-1 J^T r with step halving so the
    objective  sum ||p_i(q) - p_i||^2 + lam ||q||^2  never increases across
    accepted iterations; angles are clamped to the joint limits, and the
    extra damping mu grows tenfold whenever no step length descends. Each
    attempt stops when the accepted step is below 1e-6 rad or after 100
    iterations.

    A cold start can stall in a limit-clipped local minimum, so when the
    site residual stays above `restart_residual` the solve is retried from
    deterministic random in-range poses (up to `restarts` times) and the
    best objective wins. Warm-started trajectory frames converge on the
    first attempt.
    """
    targets = np.asarray(targets, dtype=float)
    if targets.shape != (len(skel.sites), 3):
        raise ConfigError(f"expected targets of shape ({len(skel.sites)}, 3)")
    if not np.all(np.isfinite(targets)):
        raise ConfigError("targets contain non-finite values")
    if lam <= 0:
        raise ConfigError("lambda must be positive")
    root = np.zeros(3) if root_translation is None else np.asarray(root_translation)
    if ancestors is None:
        ancestors = skel.ancestor_mask()
    lo, hi = skel.limits()

    best = _solve_single(skel, targets, q_init, lam, root, mu_dls, ancestors)
    rng = np.random.default_rng(1)
    for _ in range(restarts):
        if best.site_residual <= restart_residual:
            break
        alt = _solve_single(skel, targets, rng.uniform(lo, hi), lam, root,
                            mu_dls, ancestors)
        # retargeting cares about positional accuracy first; the regularizer
        # is a numerical device, so attempts are ranked by site residual
        if (alt.site_residual, alt.objective) < (best.site_residual, best.objective):
            best = alt
    return best


def solve_trajectory(skel: SkeletonModel, keypoints: np.ndarray, rate: float,
                     lam: float = DEFAULT_LAMBDA, q_init: np.ndarray | None = None,
                     warn=None) -> JointTrajectory:
    """Solve a whole keypoint sequence, warm-starting each frame.

    keypoints: (T, 18, 3) world site targets. The root translation of each
    frame is taken from the pelvis site target; the remaining residual is
    resolved by the joint angles.
    """
    keypoints = np.asarray(keypoints, dtype=float)
    if keypoints.ndim != 3 or keypoints.shape[1:] != (len(skel.sites), 3):
        raise ConfigError(f"expected keypoints of shape (T, {len(skel.sites)}, 3)")
    pelvis = skel.site_index("pelvis")
    ancestors = skel.ancestor_mask()
    T = len(keypoints)
    q = np.zeros((T, skel.n_coords))
    root = keypoints[:, pelvis, :].copy()
    prev = np.zeros(skel.n_coords) if q_init is None else np.asarray(q_init, dtype=float)
    for t in range(T):
        res = solve_frame(skel, keypoints[t], prev, lam,
                          root_translation=root[t], ancestors=ancestors)
        if not res.converged and warn is not None:
            warn(f"frame {t}: IK stopped after {res.iterations} iterations "
                 f"(residual {res.site_residual:.2e} m)")
        q[t] = res.q
        prev = res.q
    return JointTrajectory(rate=rate, q=q, root=root)


def finite_difference_velocities(traj: JointTrajectory) -> JointTrajectory:
    """Attach q velocities: central differences inside, one-sided at the ends."""
    if traj.n_frames < 2:
        raise ConfigError("need at least 2 frames to differentiate")
    dt = 1.0 / traj.rate
    edge = 2 if traj.n_frames >= 3 else 1
    qdot = np.gradient(traj.q, dt, axis=0, edge_order=edge)
    return JointTrajectory(rate=traj.rate, q=traj.q.copy(), root=traj.root.copy(),
                           qdot=qdot)


def resample_and_filter(traj: JointTrajectory, target_rate: float,
                        cutoff: float = 6.0) -> JointTrajectory:
    """Linear-interpolate onto `target_rate`, then apply a zero-phase
    second-order Butterworth low-pass (forward-backward) at `cutoff` Hz.

    Stale velocities are dropped; recompute them after filtering.
    """
    if target_rate <= 0:
        raise ConfigError("target rate must be positive")
    if cutoff >= target_rate / 2:
        raise ConfigError(f"cutoff {cutoff} Hz is not below the Nyquist rate "
                          f"{target_rate / 2} Hz")
    t_old = traj.times()
    n_new = int(np.floor(traj.duration * target_rate)) + 1
    t_new = np.arange(n_new) / target_rate

    def interp_cols(arr: np.ndarray) -> np.ndarray:
        out = np.empty((n_new, arr.shape[1]))
        for c in range(arr.shape[1]):
            out[:, c] = np.interp(t_new, t_old, arr[:, c])
        return out

    q = interp_cols(traj.q)
    root = interp_cols(traj.root)

    b, a = butter(2, cutoff, btype="low", fs=target_rate)
    padlen = min(3 * max(len(a), len(b)), n_new - 1)
    if padlen > 0:
        q = filtfilt(b, a, q, axis=0, padlen=padlen)
        root = filtfilt(b, a, root, axis=0, padlen=padlen)
    return JointTrajectory(rate=target_rate, q=q, root=root)


# ---------------------------------------------------------------------------
# CSV interchange
# ---------------------------------------------------------------------------

def write_keypoint_csv(keypoints: np.ndarray, skel: SkeletonModel,
                       path: str | Path, rate: float | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if rate is not None:
            fh.write(f"# rate_hz {rate!r}\n")
        writer = csv.writer(fh)
        writer.writerow(["frame", "site", "x", "y", "z"])
        for t in range(len(keypoints)):
            for s, name in enumerate(skel.site_names):
                p = keypoints[t, s]
                writer.writerow([t, name, f"{p[0]:.9f}", f"{p[1]:.9f}", f"{p[2]:.9f}"])


def read_keypoint_csv(path: str | Path, skel: SkeletonModel):
    """Returns (keypoints (T, 18, 3), rate or None). Rows may arrive in any
    order; every frame must provide every site exactly once."""
    frames: dict[int, dict[str, list[float]]] = {}
    rate = None
    site_set = set(skel.site_names)
    with open(path, newline="") as fh:
        lineno = 0
        header_seen = False
        for raw in fh:
            lineno += 1
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                fields = line[1:].split()
                if len(fields) == 2 and fields[0] == "rate_hz":
                    rate = float(fields[1])
                continue
            row = next(csv.reader([line]))
            if not header_seen:
                if row != ["frame", "site", "x", "y", "z"]:
                    raise ConfigError(f"line {lineno}: expected header "
                                      f"frame,site,x,y,z, got {row}")
                header_seen = True
                continue
            if len(row) != 5:
                raise ConfigError(f"line {lineno}: expected 5 fields, got {len(row)}")
            try:
                t = int(row[0])
                xyz = [float(row[2]), float(row[3]), float(row[4])]
            except ValueError:
                raise ConfigError(f"line {lineno}: malformed row {row}") from None
            if row[1] not in site_set:
                raise ConfigError(f"line {lineno}: unknown site {row[1]!r}")
            frames.setdefault(t, {})
            if row[1] in frames[t]:
                raise ConfigError(f"line {lineno}: duplicate site {row[1]!r} "
                                  f"in frame {t}")
            frames[t][row[1]] = xyz

    if not frames:
        raise ConfigError("keypoint file contains no data rows")
    ordered = sorted(frames)
    if ordered != list(range(ordered[0], ordered[0] + len(ordered))):
        raise ConfigError("frame indices are not contiguous")
    out = np.empty((len(ordered), len(skel.sites), 3))
    for i, t in enumerate(ordered):
        for s, name in enumerate(skel.site_names):
            if name not in frames[t]:
                raise ConfigError(f"frame {t} is missing site {name!r}")
            out[i, s] = frames[t][name]
    return out, rate


def write_trajectory_csv(traj: JointTrajectory, skel: SkeletonModel,
                         path: str | Path, comments: list[str] | None = None) -> None:
    if traj.qdot is None:
        raise ConfigError("trajectory has no velocities; differentiate first")
    names = skel.joint_names
    with open(path, "w", newline="") as fh:
        fh.write(f"# rate_hz {traj.rate!r}\n")
        for c in comments or []:
            fh.write(f"# {c}\n")
        writer = csv.writer(fh)
        writer.writerow(["time", "root_tx", "root_ty", "root_tz"]
                        + [f"q_{n}" for n in names] + [f"qd_{n}" for n in names])
        times = traj.times()
        for t in range(traj.n_frames):
            writer.writerow([f"{times[t]:.6f}"]
                            + [f"{v:.9f}" for v in traj.root[t]]
                            + [f"{v:.9f}" for v in traj.q[t]]
                            + [f"{v:.9f}" for v in traj.qdot[t]])


def read_trajectory_csv(path: str | Path, skel: SkeletonModel) -> JointTrajectory:
    rate = None
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = None
        for row in reader:
            if row and row[0].startswith("#"):
                fields = row[0][1:].split()
                if len(fields) == 2 and fields[0] == "rate_hz":
                    rate = float(fields[1])
                continue
            if header is None:
                header = row
                continue
            rows.append([float(v) for v in row])
    if header is None or not rows:
        raise ConfigError("trajectory file has no data")
    K = skel.n_coords
    expected = 4 + 2 * K
    if len(header) != expected:
        raise ConfigError(f"expected {expected} columns, got {len(header)}")
    data = np.asarray(rows)
    if rate is None:
        dt = np.diff(data[:, 0])
        if len(dt) == 0 or np.max(np.abs(dt - dt[0])) > 1e-9:
            raise ConfigError("cannot infer sample rate from time column")
        rate = 1.0 / float(dt[0])
    return JointTrajectory(rate=rate, q=data[:, 4:4 + K],
                           root=data[:, 1:4], qdot=data[:, 4 + K:])
