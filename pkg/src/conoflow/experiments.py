"""Experiment dispatch: one config in, CSV/JSON artifacts and a report out.

Artifacts are deterministic for a fixed config: floats are written with
shortest round-trip repr, JSON keys are sorted, and no randomness enters
the pipeline.  Writes go through atomic renames so a crashed run never
leaves a partial artifact.  The report echoes the fully resolved config;
its wall-clock field is the one value that varies between repeated runs.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from dataclasses import dataclass, field

from . import flow, measure, quantum
from .config import ExperimentConfig, config_as_dict, serialize
from .errors import ConoflowError, HypothesisViolationError
from .flow import PhasePoint
from .measure import PhaseSpaceBox

logger = logging.getLogger("conoflow")

STATUS_OK = "ok"
STATUS_HYPOTHESIS = "hypothesis-violation"
STATUS_ERROR = "error"


@dataclass
class Report:
    kind: str
    status: str
    observables: dict = field(default_factory=dict)
    artifacts: list[str] = field(default_factory=list)
    error_code: str | None = None
    error_message: str | None = None
    config: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0

    @property
    def exit_code(self) -> int:
        return {STATUS_OK: 0, STATUS_HYPOTHESIS: 2}.get(self.status, 1)


def _atomic_write(path: str, text: str):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_csv(path: str, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(
            repr(float(v)) if isinstance(v, float) else str(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _write_json(path: str, payload: dict) -> None:
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _trajectory_rows(traj: flow.Trajectory):
    for i in range(len(traj.times)):
        z = traj.states[i]
        row = [float(traj.times[i]), float(z[0]), float(z[1])]
        if traj.dim == 2:
            row += [float(z[2]), float(z[3])]
        row += [float(traj.p_values[i] - traj.p_values[0]), traj.regimes[i]]
        yield row


def _trajectory_header(dim: int) -> list[str]:
    cols = ["t", "x", "xi"]
    if dim == 2:
        cols += ["y", "eta"]
    return cols + ["p_drift", "regime"]


def _point(cfg: ExperimentConfig) -> PhasePoint:
    rx, rxi, ry, reta = cfg.rho0
    return PhasePoint(rx, rxi, ry, reta)


def _run_flow(cfg: ExperimentConfig, out_dir: str, report: Report):
    V = cfg.potential.build()
    m = cfg.metric.build(cfg.d)
    rho0 = _point(cfg)
    if cfg.kind == "glancing":
        cls = flow.classify(V, m, rho0, math.sqrt(cfg.tol))
        if cls.tag is not flow.ClassTag.GLANCING2:
            raise ConoflowError(
                f"glancing experiment needs a second-order tangency start; "
                f"classified {cls.tag.value}")
    traj = flow.integrate(V, m, rho0, cfg.T, cfg.tol,
                          band=cfg.band, xi_min=cfg.xi_min)
    path = os.path.join(out_dir, "trajectory.csv")
    _write_csv(path, _trajectory_header(traj.dim), _trajectory_rows(traj))
    report.artifacts.append(path)
    end = traj.endpoint
    report.observables.update({
        "endpoint": {"x": end.x, "xi": end.xi, "y": end.y, "eta": end.eta},
        "energy_drift": traj.energy_drift,
        "trajectory_status": traj.status,
        "segments": [{"t0": s.t0, "t1": s.t1, "regime": s.regime,
                      **s.info} for s in traj.segments],
    })
    if not traj.completed:
        report.status = STATUS_ERROR
        report.error_code = "trajectory-ended"
        report.error_message = traj.status


def _run_crossing(cfg: ExperimentConfig, out_dir: str, report: Report):
    V = cfg.potential.build()
    m = cfg.metric.build(cfg.d)
    res = flow.cross_interface(V, m, _point(cfg), cfg.x_exit, cfg.tol,
                               xi_min=cfg.xi_min)
    path = os.path.join(out_dir, "crossing.csv")
    p_vals = [flow.hamiltonian(V, m, PhasePoint.from_array(z, m.dim))
              for z in res.states]
    rows = []
    for i in range(len(res.times)):
        z = res.states[i]
        row = [float(res.times[i]), float(z[0]), float(z[1])]
        if m.dim == 2:
            row += [float(z[2]), float(z[3])]
        rows.append(row + [float(p_vals[i] - p_vals[0]),
                           flow.REGIME_CROSSING])
    _write_csv(path, _trajectory_header(m.dim), rows)
    report.artifacts.append(path)
    end = res.point
    report.observables.update({
        "exit": {"x": end.x, "xi": end.xi, "y": end.y, "eta": end.eta},
        "t_elapsed": res.t_elapsed,
    })


def _run_reflect_scan(cfg: ExperimentConfig, out_dir: str, report: Report):
    scan = quantum.ReflectionScanConfig(
        potential=cfg.potential.build(),
        x0=cfg.rho0[0], xi0=cfg.rho0[1], T=cfg.T,
        grid_lo=cfg.grid_lo, grid_hi=cfg.grid_hi, n_points=cfg.grid_n,
        sigma_factor=cfg.sigma_factor, dt_factor=cfg.dt_factor,
        resolution=cfg.resolution)
    rows = quantum.h_sweep(scan, cfg.h_list)
    path = os.path.join(out_dir, "reflect_scan.csv")
    csv_rows = []
    failures = []
    for row in rows:
        if "error" in row:
            failures.append({"h": row["h"], "error": row["error"]})
            csv_rows.append([row["h"], float("nan"), float("nan"),
                             float("nan")])
        else:
            csv_rows.append([row["h"], row["reflected_mass"],
                             row["transmitted_mass"], row["norm_drift"]])
    _write_csv(path, ["h", "reflected_mass", "transmitted_mass",
                      "norm_drift"], csv_rows)
    report.artifacts.append(path)
    report.observables.update({"rows": rows, "failures": failures})
    if failures:
        report.status = STATUS_ERROR
        report.error_code = "sweep-partial-failure"
        report.error_message = f"{len(failures)} of {len(rows)} rows failed"


def _box_payload(box: PhaseSpaceBox) -> list[list[float]]:
    return [[lo, hi] for lo, hi in box.intervals]


def _run_invariance(cfg: ExperimentConfig, out_dir: str, report: Report):
    V = cfg.potential.build()
    m = cfg.metric.build(cfg.d)
    rho0 = _point(cfg)
    box = PhaseSpaceBox(cfg.box)
    grid_n = (cfg.grid_n,) if cfg.d == 1 else (cfg.grid_n, cfg.grid_n)
    grid = quantum.Grid((cfg.grid_lo,) * cfg.d, (cfg.grid_hi,) * cfg.d, grid_n)
    sigma = cfg.sigma_factor * math.sqrt(cfg.h)
    u0 = quantum.coherent_state(grid, cfg.h, rho0, sigma)
    fb = flow.flow_box(V, m, box, cfg.T, cfg.tol,
                       n_per_axis=cfg.n_per_axis,
                       band=cfg.band, xi_min=cfg.xi_min)
    uT = quantum.propagate(u0, V, cfg.T, dt=cfg.dt_factor * cfg.h)
    try:
        inv = measure.invariance_defect(u0, uT, box, fb, sigma,
                                        cfg.resolution)
    except HypothesisViolationError as exc:
        report.status = STATUS_HYPOTHESIS
        report.error_code = "hypothesis-violation"
        report.error_message = str(exc)
        report.observables.update({
            "hypothesis_infimum": exc.infimum,
            "second_order_infimum": fb.second_order_infimum,
        })
        return
    payload = {
        "h": cfg.h,
        "T": cfg.T,
        "box": _box_payload(box),
        "image_box": _box_payload(inv.image_box),
        "mass_before": inv.mass_before,
        "mass_after": inv.mass_after,
        "defect": inv.defect,
        "hypothesis_infimum": inv.hypothesis_infimum,
    }
    path = os.path.join(out_dir, "invariance.json")
    _write_json(path, payload)
    report.artifacts.append(path)
    report.observables.update(payload)
    report.observables["flow_failures"] = fb.failures


def _run_evolve(cfg: ExperimentConfig, out_dir: str, report: Report):
    V = cfg.potential.build()
    grid_n = (cfg.grid_n,) if cfg.d == 1 else (cfg.grid_n, cfg.grid_n)
    grid = quantum.Grid((cfg.grid_lo,) * cfg.d, (cfg.grid_hi,) * cfg.d, grid_n)
    sigma = cfg.sigma_factor * math.sqrt(cfg.h)
    state = quantum.coherent_state(grid, cfg.h, _point(cfg), sigma)
    snapshots = []
    for idx, t_snap in enumerate(cfg.times):
        advance = t_snap - state.t
        if advance > 0.0:
            state = quantum.propagate(state, V, advance,
                                      dt=cfg.dt_factor * cfg.h)
        path = os.path.join(out_dir, f"snapshot_{idx:03d}.bin")
        quantum.write_snapshot(state, path)
        report.artifacts.append(path)
        snapshots.append({"t": state.t, "norm": state.norm, "file": path})
    report.observables.update({"h": cfg.h, "snapshots": snapshots})


def _run_curvature(cfg: ExperimentConfig, out_dir: str, report: Report):
    from .geometry import curvature_condition
    V = cfg.potential.build()
    m = cfg.metric.build(cfg.d)
    if cfg.y_window is not None and cfg.y_samples > 1:
        lo, hi = cfg.y_window
        ys = [lo + (hi - lo) * i / (cfg.y_samples - 1)
              for i in range(cfg.y_samples)]
    else:
        ys = [cfg.y]
    checks = [curvature_condition(m, V, yv, cfg.side) for yv in ys]
    results = [{"y": yv, "condition": c.satisfied, "vacuous": c.vacuous}
               for yv, c in zip(ys, checks)]
    payload = {
        "condition": all(c.satisfied for c in checks),
        "vacuous": all(c.vacuous for c in checks),
        "side": cfg.side,
        "points": results,
    }
    path = os.path.join(out_dir, "curvature.json")
    _write_json(path, payload)
    report.artifacts.append(path)
    report.observables.update(payload)


_RUNNERS = {
    "flow": _run_flow,
    "glancing": _run_flow,
    "crossing": _run_crossing,
    "reflect-scan": _run_reflect_scan,
    "invariance": _run_invariance,
    "curvature-check": _run_curvature,
    "evolve": _run_evolve,
}


def run(cfg: ExperimentConfig, out_dir: str | None = None) -> Report:
    """Execute one experiment; never raises for in-module failures.

    Exit-code mapping: 0 success, 2 hypothesis-violation refusal, 1 error.
    """
    out = out_dir or cfg.out or "."
    os.makedirs(out, exist_ok=True)
    report = Report(kind=cfg.kind, status=STATUS_OK,
                    config=config_as_dict(cfg))
    start = time.perf_counter()
    try:
        _RUNNERS[cfg.kind](cfg, out, report)
    except ConoflowError as exc:
        report.status = STATUS_HYPOTHESIS if isinstance(
            exc, HypothesisViolationError) else STATUS_ERROR
        report.error_code = type(exc).__name__
        report.error_message = str(exc)
        logger.warning("%s failed: %s", cfg.kind, exc)
    report.wall_clock_s = time.perf_counter() - start

    report_path = os.path.join(out, "report.json")
    _write_json(report_path, {
        "kind": report.kind,
        "status": report.status,
        "observables": report.observables,
        "artifacts": report.artifacts,
        "error_code": report.error_code,
        "error_message": report.error_message,
        "config": report.config,
        "config_text": serialize(cfg),
        "wall_clock_s": report.wall_clock_s,
    })
    report.artifacts.append(report_path)
    return report
