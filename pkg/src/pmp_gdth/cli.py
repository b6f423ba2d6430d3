"""Scenario runner, torture test and data export.

Subcommands::

    pmp-gdth plan      [--scenario FILE] [--config FILE] [--out DIR] [--dt S]
    pmp-gdth torture   [--n N] [--seed S] [--config FILE] [--out DIR]
    pmp-gdth surface   [--mass KG ...] [--grid NxM] [--config FILE] [--out DIR]
    pmp-gdth capacity  [--grid NxM] [--config FILE]

Files are written in SI units with full float precision, so identical
inputs give byte-identical CSVs.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .dynamics import damping_coefficients, forward_integrate, inverse_dynamics
from .gdth import GdthResult, GdthTarget, run
from .kinematics import is_reachable, mount_point, reach_bounds
from .params import JOINTS, ConfigError, ParameterError, RobotParams, default_params, load_config
from .pmp import PmpTrajectory
from .structural import GridSpec, payload_capacity, torque_surface

INCH = 0.0254


class ScenarioError(ParameterError):
    pass


class ExportError(OSError):
    pass


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class Waypoint:
    ee_target: tuple[float, float, float]
    z1_target: float | None = None
    m_obj: float = 0.0
    tolerance: float = INCH

    def target(self) -> GdthTarget:
        return GdthTarget(np.array(self.ee_target), self.z1_target, self.m_obj, self.tolerance)


@dataclass(frozen=True)
class Scenario:
    waypoints: tuple[Waypoint, ...]
    dt: float = 0.01  # sampling and re-tracking step, s
    config: Path | None = None
    out_dir: Path | None = None
    max_iter: int | None = None  # overrides gdth.max_iter
    start: tuple[float, float, float, float] | None = None  # defaults to the home pose

    def __post_init__(self) -> None:
        if len(self.waypoints) < 1:
            raise ScenarioError("scenario needs at least one waypoint")
        if not self.dt > 0:
            raise ScenarioError("scenario dt must be positive")
        if self.max_iter is not None and self.max_iter < 1:
            raise ScenarioError("max_iter must be >= 1")

    def params(self) -> RobotParams:
        params = default_params() if self.config is None else load_config(self.config)
        if self.max_iter is not None:
            params = replace(params, gdth=replace(params.gdth, max_iter=int(self.max_iter)))
        return params


def _waypoint_from(raw, index: int) -> Waypoint:
    if not isinstance(raw, dict) or "ee_target" not in raw:
        raise ConfigError(f"waypoint {index}: missing field ee_target")
    ee = raw["ee_target"]
    if not isinstance(ee, (list, tuple)) or len(ee) != 3:
        raise ConfigError(f"waypoint {index}: ee_target needs three entries (x, y, z)")
    z1 = raw.get("z1_target")
    return Waypoint(
        tuple(float(v) for v in ee),
        None if z1 is None else float(z1),
        float(raw.get("m_obj", 0.0)),
        float(raw.get("tolerance", INCH)),
    )


def load_scenario(path) -> Scenario:
    """Read a YAML scenario; a relative ``config`` is resolved next to the file."""
    import yaml

    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse scenario {path}: {exc}") from None
    if not isinstance(raw, dict) or "waypoints" not in raw:
        raise ConfigError(f"scenario {path}: missing field waypoints")
    waypoints = tuple(_waypoint_from(w, k) for k, w in enumerate(raw["waypoints"] or []))
    config = raw.get("config")
    if config is not None:
        config = Path(config)
        if not config.is_absolute():
            config = path.parent / config
    start = raw.get("start")
    if start is not None:
        start = tuple(float(v) for v in start)
        if len(start) != 4:
            raise ConfigError("scenario start needs 4 joint values")
    return Scenario(
        waypoints=waypoints,
        dt=float(raw.get("dt", 0.01)),
        config=config,
        out_dir=Path(raw["out_dir"]) if raw.get("out_dir") else None,
        max_iter=int(raw["max_iter"]) if raw.get("max_iter") is not None else None,
        start=start,
    )


def default_scenario_path() -> Path:
    return Path(str(resources.files("pmp_gdth") / "data" / "pick_place.yaml"))


# ---------------------------------------------------------------------------
# running a scenario


@dataclass(frozen=True)
class Segment:
    index: int
    waypoint: Waypoint
    gdth: GdthResult
    trajectory: PmpTrajectory
    t: np.ndarray  # scenario time of each sample
    q: np.ndarray
    qdot: np.ndarray
    qddot: np.ndarray
    u: np.ndarray

    @property
    def peak(self) -> np.ndarray:
        return np.max(np.abs(self.u), axis=0)


@dataclass(frozen=True)
class RunReport:
    segments: tuple[Segment, ...]
    stall: np.ndarray  # effective stall per joint
    rated: np.ndarray
    dt: float

    @property
    def peak(self) -> np.ndarray:
        return np.max([s.peak for s in self.segments], axis=0)

    @property
    def stall_flags(self) -> np.ndarray:
        return self.peak > self.stall

    @property
    def converged(self) -> list[bool]:
        return [s.gdth.converged for s in self.segments]

    def summary(self) -> str:
        lines = []
        for s in self.segments:
            g = s.gdth
            lines.append(
                f"waypoint {s.index}: error {g.ee_error * 1e3:.2f} mm ({g.ee_error / INCH:.3f} in), "
                f"horizons [{', '.join(f'{h:.2f}' for h in g.horizons)}] s, "
                f"{g.iterations} iterations, {'converged' if g.converged else 'NOT converged'}"
            )
        for j, name in enumerate(JOINTS):
            flag = "EXCEEDS stall" if self.stall_flags[j] else "within stall"
            lines.append(f"  peak |u_{name}| = {self.peak[j]:.3f} vs stall {self.stall[j]:.3f}: {flag}")
        return "\n".join(lines)


def _sample_segment(traj: PmpTrajectory, dt: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    n = int(math.ceil(traj.duration / dt - 1e-9)) if traj.duration > 0 else 0
    t = np.arange(n + 1) * dt
    q, v, a = traj.sample(t)
    return t, q, v, a


def _torques(q, v, a, params: RobotParams, rest) -> np.ndarray:
    B = damping_coefficients(params)
    return np.array([inverse_dynamics((qi, vi), ai, params, rest, B) for qi, vi, ai in zip(q, v, a)])


def run_scenario(scenario: Scenario, params: RobotParams | None = None, strict: bool = False) -> RunReport:
    """GDTH horizons, rest-to-rest PMP segments and inverse-dynamics torques.

    An unreachable waypoint aborts with its index.  A waypoint GDTH does not
    converge on is reported and the run continues unless ``strict``.
    """
    params = scenario.params() if params is None else params
    for k, wp in enumerate(scenario.waypoints):
        if not is_reachable(wp.ee_target, params.geometry):
            raise ScenarioError(f"waypoint {k} at {list(wp.ee_target)} is unreachable")
    q = np.array(params.home if scenario.start is None else scenario.start, dtype=float)
    t0 = 0.0
    segments = []
    for k, wp in enumerate(scenario.waypoints):
        result = run(wp.target(), q, None, params)
        if strict and not result.converged:
            raise ScenarioError(f"waypoint {k}: GDTH did not converge (error {result.ee_error:.4g} m)")
        q_end = np.where(result.horizons > 0, result.q_star, q)
        traj = PmpTrajectory.from_boundaries(q, q_end, result.horizons, t0=t0)
        t, qs, vs, acc = _sample_segment(traj, scenario.dt)
        seg_params = params.with_payload(wp.m_obj)
        u = _torques(qs, vs, acc, seg_params, q_end)
        segments.append(Segment(k, wp, result, traj, t0 + t, qs, vs, acc, u))
        t0 += t[-1]
        q = q_end
    return RunReport(tuple(segments), params.effective_stalls.copy(), np.array(params.actuators.rated), scenario.dt)


@dataclass(frozen=True)
class Retrack:
    dt: float
    segment_errors: np.ndarray  # max joint error at each segment end
    final_q: np.ndarray

    @property
    def terminal_error(self) -> float:
        return float(self.segment_errors[-1])


def retrack(report: RunReport, params: RobotParams, dt: float | None = None) -> Retrack:
    """Integrate the feedforward torques through the whole scenario.

    Each segment's PMP samples at ``dt`` give inverse-dynamics torques held
    piecewise constant; explicit Euler starts from rest at the first
    waypoint's start and carries its state from segment to segment.  At the
    report's own step the exported torques are used as they are.
    """
    dt = report.dt if dt is None else float(dt)
    state = (report.segments[0].q[0], np.zeros(4))
    errors = []
    for seg in report.segments:
        if dt == report.dt:
            q_ref, u = seg.q, seg.u
        else:
            _, q_ref, v, a = _sample_segment(seg.trajectory, dt)
            u = _torques(q_ref, v, a, params.with_payload(seg.waypoint.m_obj), seg.trajectory.qf)
        n = q_ref.shape[0] - 1
        if n > 0:

            def control(time: float, u=u, n=n) -> np.ndarray:
                return u[min(int(round(time / dt)), n)]

            sim = forward_integrate(
                state, control, dt, n * dt, params.with_payload(seg.waypoint.m_obj), seg.trajectory.qf
            )
            state = (sim.q[-1], sim.qdot[-1])
        errors.append(float(np.max(np.abs(state[0] - q_ref[-1]))))
    return Retrack(dt, np.array(errors), np.array(state[0]))


def speed_torque_correlation(segment: Segment, joint: int = 3) -> float:
    """Correlation of joint speed with the torque pushing toward the goal while the speed rises."""
    v = segment.qdot[:, joint]
    speed = np.abs(v)
    rising = np.diff(speed) > 0
    if np.count_nonzero(rising) < 3:
        return float("nan")
    direction = np.sign(segment.trajectory.qf[joint] - segment.q[0, joint])
    drive = direction * segment.u[:-1, joint][rising]
    return float(np.corrcoef(speed[:-1][rising], drive)[0, 1])


# ---------------------------------------------------------------------------
# CSV export


def _fmt(x) -> str:
    return repr(float(x))


def _write_rows(path: Path, header: list[str], rows) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from None
    return path


TRAJECTORY_COLUMNS = (
    ["segment", "t"]
    + list(JOINTS)
    + [f"{j}_dot" for j in JOINTS]
    + [f"u_{j}" for j in JOINTS]
)


def export_report(report: RunReport, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    rows = []
    for s in report.segments:
        for i in range(s.t.size):
            rows.append([str(s.index), s.t[i], *s.q[i], *s.qdot[i], *s.u[i]])
    paths = [_write_rows(out_dir / "trajectory.csv", TRAJECTORY_COLUMNS, rows)]
    wp_rows = []
    for s in report.segments:
        g = s.gdth
        wp_rows.append(
            [str(s.index), *s.waypoint.ee_target, g.ee_error * 1e3, *g.horizons, str(g.iterations), str(int(g.converged))]
        )
    paths.append(
        _write_rows(
            out_dir / "waypoints.csv",
            ["waypoint", "x", "y", "z", "error_mm"] + [f"t_{j}" for j in JOINTS] + ["iterations", "converged"],
            wp_rows,
        )
    )
    coeff_rows = []
    for s in report.segments:
        for j, name in enumerate(JOINTS):
            coeff_rows.append([str(s.index), name, *s.trajectory.coeffs[j], s.trajectory.tf[j]])
    paths.append(_write_rows(out_dir / "pmp_coefficients.csv", ["segment", "joint", "c1", "c2", "c3", "c4", "tf"], coeff_rows))
    limit_rows = [
        [name, report.rated[j], report.stall[j], report.peak[j], str(int(report.stall_flags[j]))]
        for j, name in enumerate(JOINTS)
    ]
    paths.append(_write_rows(out_dir / "limits.csv", ["joint", "rated", "effective_stall", "peak_abs_u", "exceeds"], limit_rows))
    return paths


def export_surface(m_obj: float, grid: GridSpec, params: RobotParams, path) -> Path:
    """``|u_phi0|`` grid as CSV with columns ``theta1, theta2, u_phi0, stall``."""
    surf = torque_surface(params, grid, m_obj)
    rows = [
        [a, b, surf.u_phi0[i, j], surf.stall]
        for i, a in enumerate(surf.theta1)
        for j, b in enumerate(surf.theta2)
    ]
    return _write_rows(Path(path), ["theta1", "theta2", "u_phi0", "stall"], rows)


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# ---------------------------------------------------------------------------
# torture test


@dataclass(frozen=True)
class TortureReport:
    targets: np.ndarray
    errors_mm: np.ndarray
    horizons: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray

    def fraction_within(self, mm: float = 25.4) -> float:
        return float(np.mean(self.errors_mm <= mm))

    @property
    def median_mm(self) -> float:
        return float(np.median(self.errors_mm))

    def summary(self) -> str:
        e = self.errors_mm
        h = self.horizons
        lines = [
            f"{e.size} targets: median error {np.median(e):.2f} mm, 90th percentile {np.percentile(e, 90):.2f} mm, max {e.max():.2f} mm",
            f"within 25.4 mm (1 in): {100 * self.fraction_within(25.4):.1f}%; within 6.35 mm (0.25 in): {100 * self.fraction_within(6.35):.1f}%",
            f"converged: {100 * np.mean(self.converged):.1f}%",
        ]
        for j, name in enumerate(JOINTS):
            lines.append(f"  t_{name}: median {np.median(h[:, j]):.3f} s, max {h[:, j].max():.3f} s")
        return "\n".join(lines)


def sample_targets(n: int, seed: int, params: RobotParams) -> np.ndarray:
    """``n`` points drawn uniformly from the reachable annulus above the floor."""
    rng = np.random.default_rng(seed)
    lo, hi = reach_bounds(params.geometry)
    top = float(mount_point(np.array([1.0, 0.0, 0.0]), params.geometry)[2]) + hi
    radius = hi + params.geometry.l0
    out = []
    while len(out) < n:
        x = rng.uniform([-radius, -radius, 0.0], [radius, radius, top])
        if is_reachable(x, params.geometry):
            out.append(x)
    return np.array(out).reshape(-1, 3)


def _solve_one(args) -> GdthResult:
    target, start, params = args
    return run(GdthTarget(target), start, None, params, keep_trace=False)


def torture_test(n: int = 100, seed: int = 0, params: RobotParams | None = None, targets=None, start=None, workers: int = 1) -> TortureReport:
    """GDTH from one start pose to ``n`` random reachable targets."""
    if n < 1:
        raise ParameterError("torture test needs n >= 1")
    params = default_params() if params is None else params
    targets = sample_targets(n, seed, params) if targets is None else np.asarray(targets, dtype=float).reshape(-1, 3)
    start = np.array(params.home if start is None else start, dtype=float)
    jobs = [(t, start, params) for t in targets]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_solve_one, jobs))
    else:
        results = [_solve_one(j) for j in jobs]
    return TortureReport(
        targets=targets,
        errors_mm=np.array([r.ee_error * 1e3 for r in results]),
        horizons=np.array([r.horizons for r in results]).reshape(-1, 4),
        iterations=np.array([r.iterations for r in results]),
        converged=np.array([r.converged for r in results]),
    )


def export_torture(report: TortureReport, path) -> Path:
    rows = [
        [*report.targets[k], report.errors_mm[k], *report.horizons[k], str(int(report.converged[k]))]
        for k in range(report.targets.shape[0])
    ]
    header = ["x", "y", "z", "error_mm"] + [f"t_{j}" for j in JOINTS] + ["converged"]
    return _write_rows(Path(path), header, rows)


# ---------------------------------------------------------------------------
# command line


def _grid(text: str | None) -> GridSpec:
    if text is None:
        return GridSpec()
    try:
        n1, n2 = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 31x31, got {text!r}") from None
    return GridSpec(n1=n1, n2=n2)


def _params(args) -> RobotParams:
    return default_params() if args.config is None else load_config(args.config)


def _tolerance_banner(params: RobotParams) -> str:
    g = params.gdth
    return (
        f"freeze tolerances: r {g.tol_r * 1e3:.2f} mm ({g.tol_r / INCH:.3f} in), "
        f"angles {math.degrees(g.tol_theta):.2f} deg ({g.tol_theta:.6f} rad)"
    )


def _cmd_plan(args) -> int:
    scenario = load_scenario(args.scenario or default_scenario_path())
    if args.config is not None:
        scenario = replace(scenario, config=Path(args.config))
    if args.dt is not None:
        scenario = replace(scenario, dt=args.dt)
    params = scenario.params()
    print(_tolerance_banner(params))
    report = run_scenario(scenario, params)
    print(report.summary())
    out = args.out or scenario.out_dir
    if out is not None:
        for p in export_report(report, out):
            print(f"wrote {p}")
    return 0


def _cmd_torture(args) -> int:
    params = _params(args)
    print(_tolerance_banner(params))
    report = torture_test(args.n, args.seed, params, workers=args.workers)
    print(report.summary())
    if args.out is not None:
        print(f"wrote {export_torture(report, Path(args.out) / 'torture.csv')}")
    return 0


def _cmd_surface(args) -> int:
    params = _params(args)
    grid = _grid(args.grid)
    out = Path(args.out or ".")
    for m in args.mass or [0.0]:
        path = export_surface(m, grid, params, out / f"surface_m{m:g}.csv")
        surf = torque_surface(params, grid, m)
        print(f"m_obj {m:g} kg: peak |u_phi0| {surf.peak:.3f} N*m vs stall {surf.stall:.3f}; wrote {path}")
    return 0


def _cmd_capacity(args) -> int:
    params = _params(args)
    cap = payload_capacity(params, _grid(args.grid))
    if cap.bounded:
        print(f"payload capacity {cap.mass:.5f} kg ({cap.mass / 0.45359237:.2f} lb)")
    else:
        print("payload capacity unbounded on this grid")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pmp-gdth", description="Minimum-acceleration planning with GDTH time horizons.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, grid=False):
        p.add_argument("--config", help="robot parameter YAML (default: bundled robot values)")
        if grid:
            p.add_argument("--grid", help="theta1 x theta2 grid size, e.g. 31x31")

    p = sub.add_parser("plan", help="run a waypoint scenario and export trajectories")
    common(p)
    p.add_argument("--scenario", help="scenario YAML (default: bundled pick-and-place)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--dt", type=float, help="sampling step, s")
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("torture", help="GDTH on random reachable targets")
    common(p)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=_cmd_torture)

    p = sub.add_parser("surface", help="export |u_phi0| torque surfaces")
    common(p, grid=True)
    p.add_argument("--mass", type=float, action="append", help="payload kg; repeat for several")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=_cmd_surface)

    p = sub.add_parser("capacity", help="largest payload below the azimuth stall")
    common(p, grid=True)
    p.set_defaults(func=_cmd_capacity)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParameterError, ExportError, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
