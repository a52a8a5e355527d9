"""Ideal-versus-realistic comparison reports and parameter sweeps."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from ..errors import ComparisonError
from ..world import SPEED_MAX, SPEED_MIN
from .config import SimConfig
from .runlog import RunLog, SERIES

REPORT_FIELDS = ("energy_ideal_J", "energy_realistic_J", "gap_percent", "rms_deviation_m",
                 "min_clearance_m", "success")


@dataclass(frozen=True)
class CompareReport:
    energy_ideal_J: float
    energy_realistic_J: float
    gap_percent: float
    rms_deviation_m: float
    min_clearance_m: float | None
    success: bool

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"


def _traverse_positions(log: RunLog):
    """Positions during Traverse keyed by time since the energy window opened."""
    window = log.meta.get("energy_window")
    if not window:
        return np.empty(0), np.empty((0, 3))
    cols = SERIES["states"]
    i_t, i_ph = cols.index("t"), cols.index("phase")
    i_p = cols.index("px")
    rows = [r for r in log.series["states"] if r[i_ph] == "Traverse"]
    t = np.array([r[i_t] for r in rows], dtype=float) - float(window[0])
    p = np.array([r[i_p:i_p + 3] for r in rows], dtype=float).reshape(-1, 3)
    return t, p


def rms_deviation(log_ideal: RunLog, log_realistic: RunLog) -> float:
    ti, pi = _traverse_positions(log_ideal)
    tr, pr = _traverse_positions(log_realistic)
    if len(ti) < 2 or len(tr) == 0:
        return 0.0 if len(tr) == 0 or len(ti) == 0 else float("nan")
    keep = (tr >= ti[0]) & (tr <= ti[-1])
    if not keep.any():
        return float("nan")
    ref = np.column_stack([np.interp(tr[keep], ti, pi[:, j]) for j in range(3)])
    return float(np.sqrt(np.mean(np.sum((pr[keep] - ref) ** 2, axis=1))))


def compare(log_ideal: RunLog, log_realistic: RunLog) -> CompareReport:
    hi, hr = log_ideal.meta.get("config_hash"), log_realistic.meta.get("config_hash")
    if hi != hr:
        raise ComparisonError(f"config hashes differ ({hi} vs {hr}); refusing to compare")
    e_i, e_r = log_ideal.energy, log_realistic.energy
    if not e_i > 0:
        raise ComparisonError("ideal log has no actuation energy to compare against")
    clearance = log_realistic.meta.get("clearance_m")
    return CompareReport(e_i, e_r, 100.0 * (e_r - e_i) / e_i, rms_deviation(log_ideal, log_realistic),
                         clearance, bool(log_realistic.meta.get("success", False)))


@dataclass
class SweepRow:
    speed: float
    seed: int
    energy_ideal_J: float = float("nan")
    energy_realistic_J: float = float("nan")
    gap_percent: float = float("nan")
    rms_deviation_m: float = float("nan")
    min_clearance_m: float | None = None
    success: bool = False
    aborted: bool = False
    error: str = ""


def cell_config(template: SimConfig, speed: float, seed: int) -> SimConfig:
    motion = replace(template.motion, kind="constant", speed=float(speed), s0=None)
    return replace(template, seed=int(seed), motion=motion, mode="realistic")


def run_cell(args) -> SweepRow:
    """Both modes plus comparison for one (speed, seed) cell; never raises."""
    from .episode import load_planner, run_episode
    template, speed, seed = args
    row = SweepRow(float(speed), int(seed))
    try:
        cfg = cell_config(template, speed, seed)
        net = load_planner(cfg)
        real = run_episode(cfg, net)
        ideal = run_episode(replace(cfg, mode="ideal"), net)
        rep = compare(ideal, real)
        row.energy_ideal_J = rep.energy_ideal_J
        row.energy_realistic_J = rep.energy_realistic_J
        row.gap_percent = rep.gap_percent
        row.rms_deviation_m = rep.rms_deviation_m
        row.min_clearance_m = rep.min_clearance_m
        row.success = rep.success
        row.aborted = bool(real.meta.get("aborted"))
    except Exception as exc:  # a failed cell is recorded and the sweep continues
        row.error = f"{type(exc).__name__}: {exc}"
    return row


def sweep(template: SimConfig, speeds, seeds, workers: int = 1, progress=None):
    """Run every (speed, seed) cell; returns ``(rows, summary)`` in grid order."""
    for v in speeds:
        if not SPEED_MIN - 1e-12 <= abs(float(v)) <= SPEED_MAX + 1e-12:
            raise ValueError(f"sweep speed {v} outside [{SPEED_MIN}, {SPEED_MAX}] m/s")
    cells = [(template, float(v), int(s)) for v in speeds for s in seeds]
    if workers > 1:
        from multiprocessing import Pool
        with Pool(workers) as pool:
            rows = pool.map(run_cell, cells)
    else:
        rows = []
        for c in cells:
            rows.append(run_cell(c))
            if progress is not None:
                progress(rows[-1])
    return rows, summarize(rows)


def summarize(rows) -> dict:
    gaps = [r.gap_percent for r in rows if math.isfinite(r.gap_percent)]
    n = len(rows)
    return {
        "rows": n,
        "errors": sum(1 for r in rows if r.error),
        "median_gap_percent": float(np.median(gaps)) if gaps else None,
        "min_gap_percent": float(min(gaps)) if gaps else None,
        "success_rate": (sum(1 for r in rows if r.success) / n) if n else None,
        "aborts": sum(1 for r in rows if r.aborted),
    }


def write_sweep(rows, summary, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = list(SweepRow.__dataclass_fields__)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for r in rows:
            w.writerow([_cell(getattr(r, n)) for n in names])
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return out


def _cell(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else v
