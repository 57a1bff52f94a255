"""Reduced whole-body kinematic tree used for retargeting and playback.

The model is a chain of 33 hinge coordinates (root orientation, spine
stack, and two legs) rooted at the pelvis, with a free 3D root
translation handled separately from the joint vector. 18 named sites mark
correspondences to externally tracked keypoints.

World frame: x forward, y left, z up. All offsets in meters, angles in
radians.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError

N_COORDS = 33
N_SITES = 18


@dataclass(frozen=True)
class Joint:
    """One hinge coordinate: frame = parent * T(offset) * R(axis, q)."""

    name: str
    parent: int          # index of the parent coordinate, -1 for the root
    offset: tuple[float, float, float]
    axis: tuple[float, float, float]
    lo: float = -np.pi
    hi: float = np.pi


@dataclass(frozen=True)
class Site:
    """A tracked marker rigidly attached to a coordinate frame."""

    name: str
    joint: int
    offset: tuple[float, float, float]


@dataclass(frozen=True)
class SkeletonModel:
    joints: tuple[Joint, ...]
    sites: tuple[Site, ...]

    def __post_init__(self):
        roots = [k for k, j in enumerate(self.joints) if j.parent == -1]
        if len(roots) != 1 or roots[0] != 0:
            raise ConfigError("skeleton must have exactly one root at index 0")
        for k, j in enumerate(self.joints):
            if j.parent >= k:
                raise ConfigError(f"joint {j.name} breaks topological parent order")
        if len(self.joints) != N_COORDS:
            raise ConfigError(f"expected {N_COORDS} coordinates, got {len(self.joints)}")
        if len(self.sites) != N_SITES:
            raise ConfigError(f"expected {N_SITES} sites, got {len(self.sites)}")

    @property
    def n_coords(self) -> int:
        return len(self.joints)

    @property
    def site_names(self) -> list[str]:
        return [s.name for s in self.sites]

    @property
    def joint_names(self) -> list[str]:
        return [j.name for j in self.joints]

    def joint_index(self, name: str) -> int:
        for k, j in enumerate(self.joints):
            if j.name == name:
                return k
        raise ConfigError(f"unknown joint {name!r}")

    def site_index(self, name: str) -> int:
        for k, s in enumerate(self.sites):
            if s.name == name:
                return k
        raise ConfigError(f"unknown site {name!r}")

    def limits(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([j.lo for j in self.joints])
        hi = np.array([j.hi for j in self.joints])
        return lo, hi

    def ancestor_mask(self) -> np.ndarray:
        """(K, K) bool: mask[a, k] is True when `a` is on the chain of `k`."""
        K = self.n_coords
        mask = np.zeros((K, K), dtype=bool)
        for k in range(K):
            a = k
            while a != -1:
                mask[a, k] = True
                a = self.joints[a].parent
        return mask


def _axis_rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    C = 1.0 - c
    return np.array([
        [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
        [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
        [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
    ])


def frame_kinematics(skel: SkeletonModel, q: np.ndarray,
                     root_translation: np.ndarray):
    """World rotation (K,3,3) and origin (K,3) of every coordinate frame."""
    q = np.asarray(q, dtype=float)
    if q.shape != (skel.n_coords,):
        raise ConfigError(f"expected q of shape ({skel.n_coords},), got {q.shape}")
    K = skel.n_coords
    R = np.empty((K, 3, 3))
    p = np.empty((K, 3))
    root_t = np.asarray(root_translation, dtype=float)
    for k, joint in enumerate(skel.joints):
        if joint.parent == -1:
            Rp, pp = np.eye(3), root_t
        else:
            Rp, pp = R[joint.parent], p[joint.parent]
        p[k] = pp + Rp @ np.asarray(joint.offset)
        R[k] = Rp @ _axis_rotation(np.asarray(joint.axis, dtype=float), q[k])
    return R, p


def forward_sites(skel: SkeletonModel, q: np.ndarray,
                  root_translation: np.ndarray) -> np.ndarray:
    """World positions of the tracked sites, shape (18, 3)."""
    R, p = frame_kinematics(skel, q, root_translation)
    out = np.empty((len(skel.sites), 3))
    for s, site in enumerate(skel.sites):
        out[s] = p[site.joint] + R[site.joint] @ np.asarray(site.offset)
    return out


def sites_and_jacobian(skel: SkeletonModel, q: np.ndarray,
                       root_translation: np.ndarray,
                       ancestors: np.ndarray | None = None):
    """Site positions and the (3*S, K) position Jacobian d(sites)/dq."""
    R, p = frame_kinematics(skel, q, root_translation)
    if ancestors is None:
        ancestors = skel.ancestor_mask()
    S, K = len(skel.sites), skel.n_coords
    site_joints = np.array([s.joint for s in skel.sites])
    site_offsets = np.array([s.offset for s in skel.sites])
    sites = p[site_joints] + np.einsum("sij,sj->si", R[site_joints], site_offsets)
    axes_world = np.einsum("kij,kj->ki", R, np.array([j.axis for j in skel.joints]))
    # hinge column: axis x (site - joint origin), zeroed off the chain
    diff = sites[:, None, :] - p[None, :, :]
    cols = np.cross(np.broadcast_to(axes_world[None, :, :], diff.shape), diff)
    cols = cols * ancestors[:, site_joints].T[:, :, None]
    J = cols.transpose(0, 2, 1).reshape(3 * S, K)
    return sites, J


# ---------------------------------------------------------------------------
# default 33-coordinate model
# ---------------------------------------------------------------------------

def _leg(parent: int, base: int, side: str) -> list[Joint]:
    sgn = -1.0 if side == "r" else 1.0
    hip_off = (0.0, sgn * 0.09, -0.05)
    return [
        Joint(f"hip_flexion_{side}", parent, hip_off, (0, -1, 0), -0.7, 2.1),
        Joint(f"hip_adduction_{side}", base, (0, 0, 0), (sgn, 0, 0), -0.9, 0.9),
        Joint(f"hip_rotation_{side}", base + 1, (0, 0, 0), (0, 0, 1), -0.9, 0.9),
        Joint(f"knee_flexion_{side}", base + 2, (0, 0, -0.42), (0, 1, 0), 0.0, 2.4),
        Joint(f"knee_rotation_{side}", base + 3, (0, 0, 0), (0, 0, 1), -0.4, 0.4),
        Joint(f"ankle_flexion_{side}", base + 4, (0, 0, -0.41), (0, -1, 0), -0.9, 0.7),
        Joint(f"ankle_inversion_{side}", base + 5, (0, 0, 0), (sgn, 0, 0), -0.6, 0.6),
        Joint(f"ankle_adduction_{side}", base + 6, (0, 0, 0), (0, 0, 1), -0.5, 0.5),
        Joint(f"mtp_flexion_{side}", base + 7, (0.14, 0, -0.07), (0, -1, 0), -0.6, 1.0),
    ]


def default_skeleton() -> SkeletonModel:
    """The 33-coordinate, 18-site reference model shipped with the package."""
    joints = [
        Joint("pelvis_tilt", -1, (0, 0, 0), (0, 1, 0), -0.6, 0.6),
        Joint("pelvis_list", 0, (0, 0, 0), (1, 0, 0), -0.6, 0.6),
        Joint("pelvis_rotation", 1, (0, 0, 0), (0, 0, 1), -0.8, 0.8),
        Joint("lumbar_extension", 2, (-0.02, 0, 0.10), (0, 1, 0), -0.8, 0.6),
        Joint("lumbar_bending", 3, (0, 0, 0), (1, 0, 0), -0.6, 0.6),
        Joint("lumbar_rotation", 4, (0, 0, 0), (0, 0, 1), -0.6, 0.6),
        Joint("thorax_extension", 5, (0, 0, 0.18), (0, 1, 0), -0.6, 0.6),
        Joint("thorax_bending", 6, (0, 0, 0), (1, 0, 0), -0.6, 0.6),
        Joint("thorax_rotation", 7, (0, 0, 0), (0, 0, 1), -0.6, 0.6),
        Joint("neck_extension", 8, (0, 0, 0.22), (0, 1, 0), -0.8, 0.8),
        Joint("neck_bending", 9, (0, 0, 0), (1, 0, 0), -0.6, 0.6),
        Joint("neck_rotation", 10, (0, 0, 0), (0, 0, 1), -1.0, 1.0),
        Joint("head_extension", 11, (0, 0, 0.10), (0, 1, 0), -0.7, 0.7),
        Joint("head_bending", 12, (0, 0, 0), (1, 0, 0), -0.5, 0.5),
        Joint("head_rotation", 13, (0, 0, 0), (0, 0, 1), -1.0, 1.0),
    ]
    joints += _leg(2, 15, "r")
    joints += _leg(2, 24, "l")

    sites = [
        Site("pelvis", 2, (0, 0, 0)),
        Site("sacrum", 2, (-0.12, 0, 0.02)),
        Site("lumbar", 5, (0, 0, 0)),
        Site("sternum", 8, (0.08, 0, 0.08)),
        Site("neck", 11, (0, 0, 0)),
        Site("head_top", 14, (0.02, 0, 0.12)),
        Site("r_shoulder", 8, (0, -0.18, 0.15)),
        Site("l_shoulder", 8, (0, 0.18, 0.15)),
        Site("r_hip", 17, (0, 0, 0)),
        Site("l_hip", 26, (0, 0, 0)),
        Site("r_knee", 17, (0, 0, -0.42)),
        Site("l_knee", 26, (0, 0, -0.42)),
        Site("r_ankle", 19, (0, 0, -0.41)),
        Site("l_ankle", 28, (0, 0, -0.41)),
        Site("r_heel", 22, (-0.06, 0, -0.085)),
        Site("l_heel", 31, (-0.06, 0, -0.085)),
        Site("r_toe", 23, (0.08, 0, -0.015)),
        Site("l_toe", 32, (0.08, 0, -0.015)),
    ]
    return SkeletonModel(tuple(joints), tuple(sites))


# segments that may be rescaled to match a subject's proportions:
# (proximal site, distal site, joints whose offsets stretch with the segment)
_SCALABLE_SEGMENTS = [
    ("r_hip", "r_knee", ["knee_flexion_r"]),
    ("l_hip", "l_knee", ["knee_flexion_l"]),
    ("r_knee", "r_ankle", ["ankle_flexion_r"]),
    ("l_knee", "l_ankle", ["ankle_flexion_l"]),
    ("pelvis", "lumbar", ["lumbar_extension"]),
    ("lumbar", "neck", ["thorax_extension", "neck_extension"]),
]


def scale_to_keypoints(skel: SkeletonModel, keypoints: np.ndarray) -> SkeletonModel:
    """Uniformly rescale segment offsets so rest-pose site distances match
    the measured site-to-site distances of one keypoint frame."""
    if keypoints.shape != (len(skel.sites), 3):
        raise ConfigError("keypoints must be one frame of all sites")
    rest = forward_sites(skel, np.zeros(skel.n_coords), np.zeros(3))
    joints = list(skel.joints)
    for prox, dist, scaled_joints in _SCALABLE_SEGMENTS:
        a, b = skel.site_index(prox), skel.site_index(dist)
        ref = float(np.linalg.norm(rest[b] - rest[a]))
        meas = float(np.linalg.norm(keypoints[b] - keypoints[a]))
        if ref < 1e-9 or meas < 1e-9:
            continue
        factor = meas / ref
        for name in scaled_joints:
            k = skel.joint_index(name)
            j = joints[k]
            joints[k] = replace(j, offset=tuple(np.asarray(j.offset) * factor))
    return SkeletonModel(tuple(joints), skel.sites)


# ---------------------------------------------------------------------------
# plain-text serialization
# ---------------------------------------------------------------------------

def save_skeleton(skel: SkeletonModel, path: str | Path) -> None:
    lines = ["# flexfoot skeleton"]
    names = skel.joint_names
    for j in skel.joints:
        parent = "-" if j.parent == -1 else names[j.parent]
        lines.append(
            f"joint {j.name} parent={parent} "
            f"offset={j.offset[0]!r},{j.offset[1]!r},{j.offset[2]!r} "
            f"axis={j.axis[0]!r},{j.axis[1]!r},{j.axis[2]!r} "
            f"range={j.lo!r},{j.hi!r}")
    for s in skel.sites:
        lines.append(f"site {s.name} joint={names[s.joint]} "
                     f"offset={s.offset[0]!r},{s.offset[1]!r},{s.offset[2]!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_skeleton(path: str | Path) -> SkeletonModel:
    joints: list[Joint] = []
    sites: list[Site] = []
    index: dict[str, int] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        kv = {}
        for tok in tokens[2:]:
            if "=" not in tok:
                raise ConfigError(f"line {lineno}: malformed field {tok!r}")
            key, val = tok.split("=", 1)
            kv[key] = val
        try:
            if tokens[0] == "joint":
                parent = -1 if kv["parent"] == "-" else index[kv["parent"]]
                off = tuple(float(x) for x in kv["offset"].split(","))
                axis = tuple(float(x) for x in kv["axis"].split(","))
                lo, hi = (float(x) for x in kv["range"].split(","))
                index[tokens[1]] = len(joints)
                joints.append(Joint(tokens[1], parent, off, axis, lo, hi))
            elif tokens[0] == "site":
                off = tuple(float(x) for x in kv["offset"].split(","))
                sites.append(Site(tokens[1], index[kv["joint"]], off))
            else:
                raise ConfigError(f"line {lineno}: unknown record {tokens[0]!r}")
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    return SkeletonModel(tuple(joints), tuple(sites))
