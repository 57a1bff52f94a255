"""Gait biomechanics metrics computed from playback logs.

Everything here is a pure function over the contact/state/flex logs:
edge strain fields, ground-reaction-force maps, center-of-pressure
stability margins against the support polygon, energy profiles,
variability statistics, gait-cycle segmentation and regional force
aggregation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .contact import ContactLog
from .errors import ConfigError
from .geometry import convex_hull_2d, signed_margin
from .mesh import FootMesh
from .playback import FlexLog, Segment, StateLog
from .solver import GRAVITY

REGIONS = ("heel", "midfoot", "forefoot", "toes")
DEFAULT_REGION_FRACTIONS = (0.30, 0.60, 0.85)
N_PHASE_POINTS = 101


@dataclass(frozen=True)
class AnalysisParams:
    force_threshold: float = 20.0      # N, support / heel-strike threshold
    strike_debounce: float = 0.050     # s
    region_fractions: tuple[float, float, float] = DEFAULT_REGION_FRACTIONS
    pe_datum: float = 0.0              # m, potential-energy reference height


# ---------------------------------------------------------------------------
# strain
# ---------------------------------------------------------------------------

def edge_strain(mesh: FootMesh, u: np.ndarray) -> np.ndarray:
    """Relative elongation L/L0 - 1 per edge. Positive means stretching.

    u: radial displacements, either (V,) for one state or (T, V).
    """
    u = np.asarray(u, dtype=float)
    single = u.ndim == 1
    if single:
        u = u[None, :]
    p = mesh.vertices[None, :, :] + u[:, :, None] * mesh.radial_dir[None, :, :]
    d = p[:, mesh.edges[:, 1], :] - p[:, mesh.edges[:, 0], :]
    L = np.linalg.norm(d, axis=2)
    eps = L / mesh.rest_lengths[None, :] - 1.0
    return eps[0] if single else eps


def edge_region_labels(mesh: FootMesh,
                       fractions: tuple[float, float, float] = DEFAULT_REGION_FRACTIONS
                       ) -> np.ndarray:
    """Region index (0=heel, 1=midfoot, 2=forefoot, 3=toes) per edge, from
    the rest position of the edge midpoint along the foot length."""
    lo, hi = mesh.bounding_box()
    mid_x = 0.5 * (mesh.vertices[mesh.edges[:, 0], 0]
                   + mesh.vertices[mesh.edges[:, 1], 0])
    return _region_indices(mid_x, float(lo[0]), float(hi[0]), fractions)


def vertex_region_labels(points_x: np.ndarray, x_lo: float, x_hi: float,
                         fractions: tuple[float, float, float] = DEFAULT_REGION_FRACTIONS
                         ) -> np.ndarray:
    return _region_indices(np.asarray(points_x, dtype=float), x_lo, x_hi, fractions)


def _region_indices(x: np.ndarray, x_lo: float, x_hi: float,
                    fractions: tuple[float, float, float]) -> np.ndarray:
    span = x_hi - x_lo
    if span <= 0:
        raise ConfigError("degenerate foot length for region mapping")
    rel = (x - x_lo) / span
    if np.any(rel < -1e-9) or np.any(rel > 1.0 + 1e-9):
        raise ConfigError("points outside the foot length cannot be mapped to regions")
    edges = np.asarray(fractions)
    return np.searchsorted(edges, np.clip(rel, 0.0, 1.0), side="left").astype(np.int8)


# ---------------------------------------------------------------------------
# GRF maps
# ---------------------------------------------------------------------------

@dataclass
class GrfHeatmap:
    points: np.ndarray        # (P,) contact point ids (row order)
    bin_edges: np.ndarray     # (B+1,) time bin edges
    matrix: np.ndarray        # (P, B) summed |F| per point and bin
    peak_force: float         # max per-record force magnitude [N]


def grf_heatmap(log: ContactLog, bin_width: float = 0.02) -> GrfHeatmap:
    """Force-magnitude map over (contact point, time bin).

    Cells hold the sum of per-record |F| falling in the bin; the reported
    peak is the largest single-record force magnitude, which does not
    depend on the binning.
    """
    if len(log) == 0:
        raise ConfigError("empty contact log")
    mag = log.force_magnitude()
    points = np.unique(log.vertex)
    t0, t1 = float(log.time.min()), float(log.time.max())
    n_bins = max(1, int(np.ceil((t1 - t0) / bin_width))) if t1 > t0 else 1
    edges = t0 + np.arange(n_bins + 1) * bin_width
    row = np.searchsorted(points, log.vertex)
    col = np.clip(((log.time - t0) / bin_width).astype(int), 0, n_bins - 1)
    matrix = np.zeros((len(points), n_bins))
    np.add.at(matrix, (row, col), mag)
    return GrfHeatmap(points=points, bin_edges=edges, matrix=matrix,
                      peak_force=float(mag.max()))


# ---------------------------------------------------------------------------
# center of pressure / support polygon
# ---------------------------------------------------------------------------

@dataclass
class ZmpResult:
    supported: bool
    zmp: np.ndarray | None = None       # (2,) ground-plane position
    margin: float | None = None         # + inside, - outside the hull
    hull: np.ndarray | None = None


def zmp_and_margin(positions: np.ndarray, normal_forces: np.ndarray,
                   threshold: float = 20.0) -> ZmpResult:
    """Normal-force-weighted center of pressure and its hull margin.

    positions: (N, >=2) contact positions (x, y used); normal_forces: (N,).
    Returns supported=False when the total normal force is at or below the
    threshold.
    """
    f = np.asarray(normal_forces, dtype=float)
    p = np.asarray(positions, dtype=float)[:, :2]
    total = float(f.sum())
    if len(f) == 0 or total <= threshold:
        return ZmpResult(supported=False)
    zmp = (f @ p) / total
    hull = convex_hull_2d(p)
    return ZmpResult(supported=True, zmp=zmp, margin=signed_margin(zmp, hull),
                     hull=hull)


def zmp_series(log: ContactLog, threshold: float = 20.0):
    """Per-step ZMP results over the distinct time stamps of the log."""
    times = np.unique(log.time)
    results = []
    for t in times:
        m = log.time == t
        results.append(zmp_and_margin(log.position[m], log.f_normal[m], threshold))
    return times, results


# ---------------------------------------------------------------------------
# energies and variability
# ---------------------------------------------------------------------------

def energies(state: StateLog, segments: list[Segment],
             datum: float = 0.0):
    """Kinetic and potential energy time series of the segment model."""
    if len(segments) != state.seg_pos.shape[1]:
        raise ConfigError("segment table does not match the log")
    names = [s.name for s in segments]
    if names != state.segment_names:
        raise ConfigError("segment names do not match the log")
    for s in segments:
        if s.inertia is None:
            raise ConfigError(f"segment {s.name} has no inertia tensor")
    masses = np.array([s.mass for s in segments])
    inertias = np.array([s.inertia for s in segments])

    v2 = np.sum(state.seg_vel ** 2, axis=2)
    ke = 0.5 * np.einsum("s,ts->t", masses, v2)
    for s in range(len(segments)):
        # rotate world angular velocity into the segment frame, apply the
        # principal inertia there
        rot = Rotation.from_quat(state.seg_rot[:, s])
        w_body = rot.inv().apply(state.seg_angvel[:, s])
        ke = ke + 0.5 * np.einsum("ti,i,ti->t", w_body, inertias[s], w_body)
    pe = GRAVITY * np.einsum("s,ts->t", masses, state.seg_pos[:, :, 2] - datum)
    return ke, pe


@dataclass(frozen=True)
class SeriesStats:
    mean: float
    sd: float
    cv: float


def cv_stats(series: np.ndarray) -> SeriesStats:
    """Mean, population standard deviation, and coefficient of variation."""
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise ConfigError("empty series")
    mean = float(x.mean())
    sd = float(x.std(ddof=0))
    if mean == 0.0:
        raise ConfigError("coefficient of variation undefined for zero mean")
    return SeriesStats(mean=mean, sd=sd, cv=sd / mean)


def com_motion_stats(state: StateLog):
    """Speed and acceleration-magnitude statistics of the center of mass.

    Returns (speed, accel_with_gravity_offset, accel_without). The
    gravity-inclusive variant reports |a - g| (proper acceleration), which
    equals 9.81 for a body at rest; both are provided because the two
    definitions differ by roughly that constant during gait.
    """
    speed = np.linalg.norm(state.com_vel, axis=1)
    dt = float(np.median(np.diff(state.time))) if len(state) > 1 else 1.0
    acc = np.gradient(state.com_vel, dt, axis=0, edge_order=2) \
        if len(state) >= 3 else np.zeros_like(state.com_vel)
    acc_free = np.linalg.norm(acc, axis=1)
    proper = acc.copy()
    proper[:, 2] += GRAVITY
    acc_grav = np.linalg.norm(proper, axis=1)
    return cv_stats(speed), cv_stats(acc_grav), cv_stats(acc_free), speed, acc_grav


# ---------------------------------------------------------------------------
# gait cycles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaitCycle:
    start: float
    end: float

    def __post_init__(self):
        if self.end <= self.start:
            raise ConfigError("gait cycle must end after it starts")

    @property
    def duration(self) -> float:
        return self.end - self.start

    def phase(self, t) -> np.ndarray:
        """Map times to percent of cycle (0-100, monotone)."""
        return 100.0 * (np.asarray(t, dtype=float) - self.start) / self.duration


def _uniform_times(log: ContactLog) -> np.ndarray:
    stamps = np.unique(log.time)
    if len(stamps) < 2:
        return stamps
    dt = float(np.min(np.diff(stamps)))
    n = int(round((stamps[-1] - stamps[0]) / dt)) + 1
    return stamps[0] + np.arange(n) * dt


def force_series(log: ContactLog, times: np.ndarray,
                 vertex_mask: np.ndarray | None = None) -> np.ndarray:
    """Summed normal force per time sample (zeros where nothing touches)."""
    use = np.ones(len(log), dtype=bool) if vertex_mask is None else vertex_mask
    idx = np.searchsorted(times, log.time[use])
    idx = np.clip(idx, 0, len(times) - 1)
    out = np.zeros(len(times))
    np.add.at(out, idx, log.f_normal[use])
    return out


def segment_cycles(log: ContactLog, side: str, region_labels: np.ndarray,
                   times: np.ndarray | None = None,
                   params: AnalysisParams | None = None) -> list[GaitCycle]:
    """Split one side's contact history into gait cycles.

    A heel strike is the rearfoot-region vertical force rising through the
    threshold, debounced so chatter within the debounce window counts once.
    Cycles run between consecutive strikes of the same side.
    """
    params = params or AnalysisParams()
    side_log = log.for_side(side)
    if len(side_log) == 0:
        return []
    if times is None:
        times = _uniform_times(side_log)
    heel_mask = region_labels[side_log.vertex] == 0
    f_heel = force_series(side_log, times, heel_mask)

    thr = params.force_threshold
    above = f_heel >= thr
    strikes = []
    last = -np.inf
    for k in range(1, len(times)):
        if above[k] and not above[k - 1] and times[k] - last > params.strike_debounce:
            strikes.append(times[k])
            last = times[k]
    return [GaitCycle(strikes[i], strikes[i + 1]) for i in range(len(strikes) - 1)]


def stance_interval(log: ContactLog, side: str, cycle: GaitCycle,
                    params: AnalysisParams | None = None) -> tuple[float, float]:
    """[heel strike, toe off] of the cycle: toe off is the last sample within
    the cycle whose whole-foot normal force exceeds the support threshold."""
    params = params or AnalysisParams()
    side_log = log.for_side(side)
    times = _uniform_times(side_log)
    f = force_series(side_log, times)
    in_cycle = (times >= cycle.start) & (times < cycle.end)
    loaded = in_cycle & (f > params.force_threshold)
    if not loaded.any():
        return cycle.start, cycle.start
    return cycle.start, float(times[loaded][-1])


def distinct_contacts_per_stance(log: ContactLog, side: str,
                                 cycles: list[GaitCycle],
                                 params: AnalysisParams | None = None) -> list[int]:
    """Number of distinct contact points touching during each stance."""
    params = params or AnalysisParams()
    side_log = log.for_side(side)
    counts = []
    for cyc in cycles:
        t0, t1 = stance_interval(log, side, cyc, params)
        m = (side_log.time >= t0) & (side_log.time <= t1)
        counts.append(int(len(np.unique(side_log.vertex[m]))))
    return counts


# ---------------------------------------------------------------------------
# regional forces
# ---------------------------------------------------------------------------

def regional_force_series(log: ContactLog, side: str, region_labels: np.ndarray,
                          times: np.ndarray | None = None):
    """Per-region summed normal force series; regions partition the foot, so
    the rows add up to the whole-foot force at every sample."""
    side_log = log.for_side(side)
    if len(side_log) and (np.any(region_labels[side_log.vertex] < 0)
                          or np.any(region_labels[side_log.vertex] >= len(REGIONS))):
        raise ConfigError("contact log references unmapped vertices")
    if times is None:
        times = _uniform_times(side_log)
    series = {}
    for r, name in enumerate(REGIONS):
        series[name] = force_series(side_log, times,
                                    region_labels[side_log.vertex] == r)
    return times, series


def regional_forces(log: ContactLog, side: str, region_labels: np.ndarray,
                    cycles: list[GaitCycle],
                    n_points: int = N_PHASE_POINTS):
    """Region force curves versus percent of gait cycle.

    Returns {region: (n_points,) mean curve} plus the per-cycle stack
    {region: (n_cycles, n_points)}.
    """
    if not cycles:
        raise ConfigError("no gait cycles to aggregate")
    times, series = regional_force_series(log, side, region_labels)
    phase = np.linspace(0.0, 100.0, n_points)
    per_cycle = {name: np.zeros((len(cycles), n_points)) for name in REGIONS}
    for c, cyc in enumerate(cycles):
        tq = cyc.start + phase / 100.0 * cyc.duration
        for name in REGIONS:
            per_cycle[name][c] = np.interp(tq, times, series[name])
    mean = {name: per_cycle[name].mean(axis=0) for name in REGIONS}
    return mean, per_cycle


def curve_vs_phase(times: np.ndarray, values: np.ndarray,
                   cycles: list[GaitCycle],
                   n_points: int = N_PHASE_POINTS) -> np.ndarray:
    """Average any time series over gait cycles onto a phase axis."""
    if not cycles:
        raise ConfigError("no gait cycles to aggregate")
    phase = np.linspace(0.0, 100.0, n_points)
    acc = np.zeros(n_points)
    for cyc in cycles:
        tq = cyc.start + phase / 100.0 * cyc.duration
        acc += np.interp(tq, times, values)
    return acc / len(cycles)


# ---------------------------------------------------------------------------
# aggregated report
# ---------------------------------------------------------------------------

@dataclass
class GaitReport:
    """Aggregated walking metrics for one model variant."""

    model: str
    duration: float
    peak_point_force: float            # max per-record |F| [N]
    peak_total_grf: float              # max summed vertical force [N]
    cycles: list[tuple[float, float]]
    contacts_per_stance: list[int]
    zmp_inside_fraction: float
    zmp_min_margin: float
    zmp_mean_margin: float
    speed_stats: SeriesStats
    accel_stats_proper: SeriesStats
    accel_stats_free: SeriesStats
    ke_mean: float
    ke_sd: float
    pe_mean: float
    pe_sd: float
    ke_curve: np.ndarray
    pe_curve: np.ndarray
    regional_curves: dict[str, np.ndarray]
    strain_region_curves: dict[str, np.ndarray] | None = None
    heel_strike_heel_strain: float | None = None
    late_stance_forefoot_strain: float | None = None
    reward_means: dict[str, float] | None = None
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def conv(x):
            if isinstance(x, np.ndarray):
                return x.tolist()
            if isinstance(x, SeriesStats):
                return {"mean": x.mean, "sd": x.sd, "cv": x.cv}
            if isinstance(x, dict):
                return {k: conv(v) for k, v in x.items()}
            if isinstance(x, (list, tuple)):
                return [conv(v) for v in x]
            if isinstance(x, (np.floating, np.integer)):
                return x.item()
            return x
        return {k: conv(v) for k, v in self.__dict__.items()}

    def to_json(self, path: str | Path, comments: dict | None = None) -> None:
        payload = self.to_dict()
        if comments:
            payload["provenance"] = comments
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _region_labels_for_result(result) -> np.ndarray:
    """Region labels for the contact point ids appearing in a run's log."""
    from .contact import default_rigid_layout

    mesh = result.meshes["right"]
    lo, hi = mesh.bounding_box()
    if result.model == "deformable":
        return vertex_region_labels(mesh.vertices[:, 0], float(lo[0]), float(hi[0]))
    layout = default_rigid_layout(mesh, radius=result.config.rigid_sphere_radius,
                                  contact_mass=result.config.rigid_contact_mass)
    return vertex_region_labels(layout.positions[:, 0], float(lo[0]), float(hi[0]))


def strain_phase_metrics(result, cycles: list[GaitCycle],
                         params: AnalysisParams | None = None):
    """Strain summaries for the deformable model on the right foot.

    Returns (heel strain averaged over heel-strike frames, forefoot+toe
    strain averaged over the last 10% of each stance, {region: phase curve}).
    """
    params = params or AnalysisParams()
    mesh = result.meshes["right"]
    flex = result.flex["right"]
    labels = edge_region_labels(mesh, params.region_fractions)
    eps = edge_strain(mesh, flex.u)

    region_means = {}
    for r, name in enumerate(REGIONS):
        sel = labels == r
        region_means[name] = eps[:, sel].mean(axis=1) if sel.any() else \
            np.zeros(len(eps))

    strike_vals = []
    late_vals = []
    fore_toes = (labels == 2) | (labels == 3)
    heel = labels == 0
    for cyc in cycles:
        k = int(np.argmin(np.abs(flex.time - cyc.start)))
        strike_vals.append(float(eps[k, heel].mean()))
        t0, t_off = stance_interval(result.contacts, "right", cyc, params)
        if t_off > t0:
            m = (flex.time >= t_off - 0.1 * (t_off - t0)) & (flex.time <= t_off)
            if m.any():
                late_vals.append(float(eps[np.ix_(m, fore_toes)].mean()))

    heel_strike_strain = float(np.mean(strike_vals)) if strike_vals else np.nan
    late_stance_strain = float(np.mean(late_vals)) if late_vals else np.nan
    curves = None
    if cycles:
        curves = {name: curve_vs_phase(flex.time, region_means[name], cycles)
                  for name in REGIONS}
    return heel_strike_strain, late_stance_strain, curves


def build_report(result, reference=None,
                 params: AnalysisParams | None = None) -> GaitReport:
    """Aggregate one playback run into a GaitReport.

    When gait cycles are detected, statistics are restricted to the window
    from the first to the last right-side heel strike so that the lead-in
    transient does not contaminate them.
    """
    from .playback import default_segments, reward_terms

    params = params or AnalysisParams()
    state = result.state
    contacts = result.contacts
    labels = _region_labels_for_result(result)

    cycles = segment_cycles(contacts, "right", labels, times=state.time,
                            params=params)
    if cycles:
        w0, w1 = cycles[0].start, cycles[-1].end
    else:
        w0, w1 = float(state.time[0]), float(state.time[-1])
    sm = (state.time >= w0) & (state.time <= w1)
    cm = (contacts.time >= w0) & (contacts.time <= w1)
    state_w = state.masked(sm)
    contacts_w = contacts.masked(cm)

    heat = grf_heatmap(contacts_w if len(contacts_w) else contacts)
    peak_total = float(np.max(state_w.total_grf_z)) if len(state_w) else 0.0

    _, zmps = zmp_series(contacts_w if len(contacts_w) else contacts,
                         params.force_threshold)
    margins = np.array([z.margin for z in zmps if z.supported])
    inside = float(np.mean(margins >= -1e-9)) if len(margins) else np.nan

    speed_stats, acc_proper, acc_free, speed, _ = com_motion_stats(state_w)
    segments = default_segments(result.config.total_mass)
    ke, pe = energies(state_w, segments, datum=params.pe_datum)

    report = GaitReport(
        model=result.model,
        duration=float(state.time[-1] - state.time[0]),
        peak_point_force=heat.peak_force,
        peak_total_grf=peak_total,
        cycles=[(c.start, c.end) for c in cycles],
        contacts_per_stance=distinct_contacts_per_stance(contacts, "right",
                                                         cycles, params),
        zmp_inside_fraction=inside,
        zmp_min_margin=float(margins.min()) if len(margins) else np.nan,
        zmp_mean_margin=float(margins.mean()) if len(margins) else np.nan,
        speed_stats=speed_stats,
        accel_stats_proper=acc_proper,
        accel_stats_free=acc_free,
        ke_mean=float(ke.mean()), ke_sd=float(ke.std(ddof=0)),
        pe_mean=float(pe.mean()), pe_sd=float(pe.std(ddof=0)),
        ke_curve=curve_vs_phase(state_w.time, ke, cycles) if cycles else np.zeros(0),
        pe_curve=curve_vs_phase(state_w.time, pe, cycles) if cycles else np.zeros(0),
        regional_curves=(regional_forces(contacts, "right", labels, cycles)[0]
                         if cycles else {}),
    )

    if result.model == "deformable" and result.flex and cycles:
        hs, ls, curves = strain_phase_metrics(result, cycles, params)
        report.heel_strike_heel_strain = hs
        report.late_stance_forefoot_strain = ls
        report.strain_region_curves = curves

    if reference is not None:
        rb = reward_terms(state, reference,
                          target_speed=result.config.target_speed)
        report.reward_means = {
            "r_q": float(rb.r_q.mean()), "r_qdot": float(rb.r_qdot.mean()),
            "r_act": float(rb.r_act.mean()), "r_vel": float(rb.r_vel.mean()),
            "r_healthy": float(rb.r_healthy.mean()),
            "total": float(rb.total.mean())}
    return report


def compare_reports(a: GaitReport, b: GaitReport) -> dict:
    """Side-by-side comparison of two runs (typically deformable vs rigid)."""
    def peak_drop(x, y):
        return (y - x) / y if y else np.nan

    return {
        "models": [a.model, b.model],
        "peak_point_force": [a.peak_point_force, b.peak_point_force],
        "peak_point_force_reduction": peak_drop(a.peak_point_force,
                                                b.peak_point_force),
        "peak_total_grf": [a.peak_total_grf, b.peak_total_grf],
        "peak_total_grf_reduction": peak_drop(a.peak_total_grf, b.peak_total_grf),
        "contacts_per_stance": [a.contacts_per_stance, b.contacts_per_stance],
        "speed_cv": [a.speed_stats.cv, b.speed_stats.cv],
        "accel_cv_proper": [a.accel_stats_proper.cv, b.accel_stats_proper.cv],
        "ke_mean": [a.ke_mean, b.ke_mean],
        "pe_sd": [a.pe_sd, b.pe_sd],
        "zmp_min_margin": [a.zmp_min_margin, b.zmp_min_margin],
        "zmp_inside_fraction": [a.zmp_inside_fraction, b.zmp_inside_fraction],
    }
