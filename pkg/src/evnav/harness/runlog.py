"""Run logs: one CSV per time series plus a JSON metadata file."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

SERIES = {
    "states": ["t", "phase", "px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz",
               "wx", "wy", "wz", "r1", "r2", "r3", "r4", "energy_J"],
    "setpoints": ["t", "px", "py", "pz", "vx", "vy", "vz", "ax", "ay", "az"],
    "commands": ["t", "t_deliver", "roll", "pitch", "yaw_rate", "thrust"],
    "detections": ["t", "u", "v", "radius_px", "spike_count"],
    "ring": ["t", "true_s", "true_vs", "est_s", "est_vs", "est_valid"],
    "plans": ["t", "t0", "T", "T_exit", "cross_x", "cross_y", "cross_z", "offset_1", "offset_2",
              "window_start", "window_end"],
}


@dataclass
class RunLog:
    meta: dict = field(default_factory=dict)
    series: dict = field(default_factory=lambda: {k: [] for k in SERIES})

    def add(self, name: str, row):
        self.series[name].append(tuple(row))

    def column(self, name: str, col: str):
        i = SERIES[name].index(col)
        return [r[i] for r in self.series[name]]

    @property
    def energy(self) -> float:
        return float(self.meta.get("energy_J", 0.0))


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_log(log: RunLog, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, header in SERIES.items():
        with open(out / f"{name}.csv", "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in log.series[name]:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
    (out / "meta.json").write_text(json.dumps(log.meta, indent=2, sort_keys=True) + "\n")
    return out


def _parse(v: str):
    try:
        return int(v)
    except ValueError:
        try:
            return float(v)
        except ValueError:
            return v


def read_log(in_dir) -> RunLog:
    src = Path(in_dir)
    meta_path = src / "meta.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"{src} is not a run log (missing meta.json)")
    log = RunLog(json.loads(meta_path.read_text()))
    for name, header in SERIES.items():
        path = src / f"{name}.csv"
        if not path.exists():
            continue
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if rows and rows[0] != header:
            raise ValueError(f"{path}: unexpected header")
        log.series[name] = [tuple(_parse(v) for v in r) for r in rows[1:]]
    return log
