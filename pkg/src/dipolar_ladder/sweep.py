"""Parameter-grid orchestration with a resumable on-disk store.

A :class:`SweepGrid` expands named axes over a base :class:`SystemParams`.
Each grid point becomes one task whose id is a hash of its coordinates, the
task type and the engine config, so a rerun of the same manifest finds its own
finished records and skips them.

Store layout::

    <dir>/manifest.json         grid definition and list of completed ids
    <dir>/records/<id>.json     one record per task (completed or failed)
    <dir>/series/<id>.csv       time series of quench tasks
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor, as_completed
from concurrent.futures.process import BrokenProcessPool
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .model import ParameterError, SystemParams, params_from_dict

__all__ = [
    "TASK_TYPES",
    "SweepGrid",
    "Task",
    "SweepResultStore",
    "plan",
    "execute",
    "run_task",
    "aggregate_phase_table",
    "write_phase_table",
    "load_manifest",
]

log = logging.getLogger(__name__)

TASK_TYPES = ("ground_state", "global_quench", "local_quench")
_AXIS_NAMES = {"L", "J_s", "J_d", "h_s", "h_d", "C"}
_PARAM_FIELD = {"h_s": "h_s_default", "h_d": "h_d_default"}


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class Task:
    task_id: str
    coords: dict
    params: SystemParams
    task_type: str
    config: dict

    def payload(self) -> dict:
        return {"task_id": self.task_id, "coords": self.coords, "params": self.params.to_file_dict(),
                "task_type": self.task_type, "config": self.config}


@dataclass
class SweepGrid:
    """Cartesian grid of parameter values.

    ``axes`` is a list of ``(name, values)`` with names from
    L, J_s, J_d, h_s, h_d, C. ``config`` holds engine settings for the task
    type: DMRG keys (chi_max, seed, ...) and, for quenches, keys such as
    ``quench`` (final-parameter changes), ``dt``, ``t_end``, ``flip_site``.
    """

    axes: list[tuple[str, list]]
    base: SystemParams
    task_type: str = "ground_state"
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.task_type not in TASK_TYPES:
            raise ParameterError(f"task_type must be one of {TASK_TYPES}")
        names = [a for a, _ in self.axes]
        bad = [a for a in names if a not in _AXIS_NAMES]
        if bad:
            raise ParameterError(f"unknown axis {bad[0]!r}")
        if len(set(names)) != len(names):
            raise ParameterError("duplicate axis name")
        self.axes = [(a, [float(v) if a != "L" else int(v) for v in vals]) for a, vals in self.axes]

    @property
    def size(self) -> int:
        return int(np.prod([len(v) for _, v in self.axes])) if self.axes else 1

    def config_hash(self) -> str:
        return hashlib.sha256(_canonical(self.config).encode()).hexdigest()[:12]

    def task_id(self, coords: dict) -> str:
        key = _canonical({"coords": coords, "type": self.task_type, "config": self.config,
                          "base": self.base.to_file_dict()})
        return hashlib.sha256(key.encode()).hexdigest()[:16]

    def tasks(self) -> list[Task]:
        names = [a for a, _ in self.axes]
        out = []
        for values in itertools.product(*(v for _, v in self.axes)):
            coords = dict(zip(names, values))
            changes = {_PARAM_FIELD.get(k, k): v for k, v in coords.items()}
            params = self.base.replace(**changes)
            out.append(Task(self.task_id(coords), coords, params, self.task_type, self.config))
        return out

    def to_dict(self) -> dict:
        return {"axes": [[a, list(v)] for a, v in self.axes], "base": self.base.to_file_dict(),
                "task_type": self.task_type, "config": self.config}

    @classmethod
    def from_dict(cls, data: dict) -> "SweepGrid":
        unknown = set(data) - {"axes", "base", "task_type", "config"}
        if unknown:
            raise ParameterError(f"unknown manifest key {sorted(unknown)[0]!r}")
        axes = data.get("axes")
        if isinstance(axes, dict):
            axes = list(axes.items())
        if not axes:
            raise ParameterError("manifest needs a non-empty 'axes' entry")
        return cls([(a, list(v)) for a, v in axes], params_from_dict(data.get("base", {})),
                   data.get("task_type", "ground_state"), dict(data.get("config") or {}))


def load_manifest(path: str | Path) -> SweepGrid:
    """Sweep manifest in YAML or JSON."""
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ParameterError(f"{path}: manifest must be a mapping")
    return SweepGrid.from_dict(data)


class SweepResultStore:
    """Append-only record set in a directory, written by one process."""

    def __init__(self, directory: str | Path, grid: SweepGrid | None = None):
        self.dir = Path(directory)
        self.records_dir = self.dir / "records"
        self.series_dir = self.dir / "series"
        self.records_dir.mkdir(parents=True, exist_ok=True)
        self.series_dir.mkdir(exist_ok=True)
        manifest = self.dir / "manifest.json"
        if grid is None and manifest.exists():
            stored = json.loads(manifest.read_text()).get("grid")
            grid = SweepGrid.from_dict(stored) if stored else None
        self.grid = grid
        self._write_manifest()

    def _write_json(self, path: Path, obj) -> None:
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
        os.replace(tmp, path)

    def _write_manifest(self) -> None:
        manifest = {"grid": self.grid.to_dict() if self.grid else None, "completed": sorted(self.completed_ids())}
        self._write_json(self.dir / "manifest.json", manifest)

    def flush(self) -> None:
        self._write_manifest()

    def records(self) -> dict[str, dict]:
        out = {}
        for p in sorted(self.records_dir.glob("*.json")):
            out[p.stem] = json.loads(p.read_text())
        return out

    def completed_ids(self) -> set[str]:
        return {k for k, r in self.records().items() if r.get("status") == "completed"}

    def add(self, record: dict) -> bool:
        """Store a record; a completed record is never replaced. Returns True if written."""
        path = self.records_dir / f"{record['task_id']}.json"
        if path.exists() and json.loads(path.read_text()).get("status") == "completed":
            return False
        self._write_json(path, record)
        self._write_manifest()
        return True


def plan(grid: SweepGrid, store: SweepResultStore | None = None) -> list[Task]:
    """Grid tasks in axis order, skipping ids already completed in ``store``."""
    done = store.completed_ids() if store is not None else set()
    return [t for t in grid.tasks() if t.task_id not in done]


# ---------------------------------------------------------------------------
# task bodies


def _dmrg_config(cfg: dict):
    from .dmrg import DmrgConfig

    keys = set(DmrgConfig.__dataclass_fields__)
    return DmrgConfig(**{k: v for k, v in cfg.items() if k in keys})


def _ground_state_task(task: Task, series_dir: Path | None) -> dict:
    from .dmrg import classify_phase, find_ground_state

    cfg = _dmrg_config(task.config)
    gs = find_ground_state(task.params, cfg)
    phase = classify_phase(gs, tuple(task.config.get("thresholds", (0.05, 0.05))))
    status = "completed" if gs.converged or not task.config.get("require_convergence", False) else "failed"
    return {"status": status, "energy": gs.energy, "converged": gs.converged, "averages": gs.averages,
            "abs_sz": gs.abs_sz, "abs_dz": gs.abs_dz, "phase": list(phase), "max_bond": gs.max_bond,
            "discarded_weight": gs.discarded_weight, "sweeps": len(gs.energy_trace)}


def _global_quench_task(task: Task, series_dir: Path | None) -> dict:
    from .analysis import fit_damped_cosine
    from .tebd import QuenchSpec, run_global_quench, write_timeseries

    c = task.config
    final = task.params.replace(**{_PARAM_FIELD.get(k, k): v for k, v in c.get("quench", {}).items()})
    spec = QuenchSpec(task.params, final, c.get("dt", 2e-3), c.get("t_end", 0.5), c.get("stride", 5),
                      c.get("tebd_chi_max", 128), c.get("tebd_cutoff", 1e-10), c.get("energy", False))
    series = run_global_quench(spec, _dmrg_config(c))
    window = tuple(c.get("window", (0.0, 0.3)))
    fit = fit_damped_cosine(series, c.get("observable", "dx"), window)
    ref = None
    if series_dir is not None:
        ref = f"series/{task.task_id}.csv"
        write_timeseries(series, series_dir / f"{task.task_id}.csv", {"task_id": task.task_id})
    return {"status": "completed" if series.status == "ok" else "failed", "series_status": series.status,
            "fit": fit.record(), "series": ref, "max_bond": int(series.max_bond.max()),
            "discarded_weight": float(series.discarded_weight[-1])}


def _local_quench_task(task: Task, series_dir: Path | None) -> dict:
    from .analysis import track_light_cone
    from .tebd import run_local_quench, write_profiles

    c = task.config
    site = int(c.get("flip_site", task.params.L // 2))
    series = run_local_quench(task.params, site, tuple(c.get("prep_fields", (-1.0, 20.0))), _dmrg_config(c),
                              c.get("dt", 5e-3), c.get("t_end", 3.0), c.get("stride", 10),
                              c.get("tebd_chi_max", 128), c.get("tebd_cutoff", 1e-10), c.get("energy", False))
    out = {"status": "completed" if series.status == "ok" else "failed", "series_status": series.status,
           "velocity": {}, "max_bond": int(series.max_bond.max())}
    for name in ("dx", "sx"):
        for side in ("left", "right"):
            v = track_light_cone(series.profiles[name], series.times, site, side,
                                 max_distance=c.get("max_distance"))
            out["velocity"][f"{name}_{side}"] = v.record()
        if series_dir is not None:
            write_profiles(series, name, series_dir / f"{task.task_id}_{name}.csv", {"task_id": task.task_id})
    return out


_BODIES = {"ground_state": _ground_state_task, "global_quench": _global_quench_task,
           "local_quench": _local_quench_task}


def run_task(payload: dict, series_dir: str | None = None) -> dict:
    """Run one task; exceptions become a failed record rather than propagating."""
    task = Task(payload["task_id"], payload["coords"], params_from_dict(payload["params"]), payload["task_type"],
                payload["config"])
    t0 = time.perf_counter()
    base = {"task_id": task.task_id, "coords": task.coords, "task_type": task.task_type,
            "params": task.params.to_file_dict(),
            "config_hash": hashlib.sha256(_canonical(task.config).encode()).hexdigest()[:12]}
    try:
        result = _BODIES[task.task_type](task, Path(series_dir) if series_dir else None)
    except Exception as exc:  # recorded, never dropped
        result = {"status": "failed", "error": f"{type(exc).__name__}: {exc}", "traceback": traceback.format_exc()}
    result.update(base)
    result["wall_time"] = time.perf_counter() - t0
    return _plain(result)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def _failed(task: Task, message: str) -> dict:
    return {"task_id": task.task_id, "coords": task.coords, "task_type": task.task_type,
            "params": task.params.to_file_dict(), "status": "failed", "error": message, "wall_time": 0.0}


def execute(tasks: list[Task], store: SweepResultStore, workers: int = 1) -> list[dict]:
    """Run ``tasks`` with at most ``workers`` in flight and append each record to ``store``.

    A crashed worker process breaks the pool; the unfinished tasks are then
    retried one per fresh single-worker pool so that only the task that
    actually crashes is marked failed.
    """
    series_dir = str(store.series_dir)
    out = []

    def keep(rec):
        store.add(rec)
        out.append(rec)

    try:
        if workers <= 1:
            for t in tasks:
                keep(run_task(t.payload(), series_dir))
            return out
        pending = {t.task_id: t for t in tasks}
        try:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futs = {pool.submit(run_task, t.payload(), series_dir): t for t in tasks}
                for f in as_completed(futs):
                    t = futs[f]
                    try:
                        rec = f.result()
                    except BrokenProcessPool:
                        continue
                    pending.pop(t.task_id, None)
                    keep(rec)
        except BrokenProcessPool:
            pass
        for t in [t for t in tasks if t.task_id in pending]:
            try:
                with ProcessPoolExecutor(max_workers=1) as pool:
                    rec = pool.submit(run_task, t.payload(), series_dir).result()
            except BrokenProcessPool:
                rec = _failed(t, "worker process crashed")
            keep(rec)
        return out
    finally:
        store.flush()


# ---------------------------------------------------------------------------
# aggregation

PHASE_COLUMNS = ["C", "h_s", "h_d", "sx", "dx", "abs_sz", "abs_dz", "phase_s", "phase_d"]


def aggregate_phase_table(store: SweepResultStore) -> list[dict]:
    """One row per completed ground-state record, sorted by (C, h_s, h_d)."""
    rows = []
    for rec in store.records().values():
        if rec.get("task_type") != "ground_state" or rec.get("status") != "completed":
            continue
        p = rec["params"]
        rows.append({"C": p["C"], "h_s": p["h_s"], "h_d": p["h_d"], "sx": rec["averages"]["sx"],
                     "dx": rec["averages"]["dx"], "abs_sz": rec["abs_sz"], "abs_dz": rec["abs_dz"],
                     "phase_s": rec["phase"][0], "phase_d": rec["phase"][1]})
    rows.sort(key=lambda r: (r["C"], r["h_s"], r["h_d"]))
    return rows


def write_phase_table(rows: list[dict], path: str | Path, header: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        for k, v in sorted((header or {}).items()):
            fh.write(f"# {k}: {v}\n")
        w = csv.DictWriter(fh, fieldnames=PHASE_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
