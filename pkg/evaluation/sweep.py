"""
Distortion sweeps: seeded end-to-end experiments over a (kind, amount) grid.

Every cell runs `reps` independent scenarios; cells are independent and run
in a process pool. Failed repetitions are recorded in the status column.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from multiprocessing import Pool
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from calibration.pipeline import run_offline
from calibration.settings import CalibrationSettings, resolve
from errors import CalibrationError, InvalidParams
from evaluation.metrics import EvaluationReport, merge_reports
from monitoring import get_run_logger
from simulator import (
    DistortionKind,
    DistortionSpec,
    ScenarioParams,
    apply_distortion,
    generate_scenario,
    make_rig,
    render_frames,
    true_calibration,
)

DEFAULT_AMOUNTS = (0.0, 0.05, 0.1, 0.2, 0.3)
COLUMNS = [
    "kind",
    "amount",
    "translation_mean",
    "translation_std",
    "orientation_mean",
    "orientation_std",
    "runtime",
    "reps",
    "status",
]


@dataclass(frozen=True)
class SweepCell:
    kind: str
    amount: float
    reps: int
    seed: int
    params: ScenarioParams
    rig: str
    settings: CalibrationSettings


def parse_grid(text: Optional[str]) -> list[tuple[str, float]]:
    """
    Parse "kind=a,b;kind=c" into (kind, amount) cells.

    An empty grid means every kind over the default amounts; "all=a,b" applies
    the amounts to every kind.

    Raises:
        InvalidParams: unknown kind or non-numeric amount
    """
    kinds = [k.value for k in DistortionKind]
    if not text or not text.strip():
        return [(k, a) for k in kinds for a in DEFAULT_AMOUNTS]
    cells: list[tuple[str, float]] = []
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        name, _, values = chunk.partition("=")
        name = name.strip()
        try:
            amounts = [float(v) for v in values.split(",") if v.strip()] or list(DEFAULT_AMOUNTS)
        except ValueError as e:
            raise InvalidParams(f"invalid amounts in grid entry '{chunk}'", stage="sweep") from e
        targets = kinds if name == "all" else [name]
        for kind in targets:
            if kind not in kinds:
                raise InvalidParams(f"unknown distortion kind '{kind}', expected one of {kinds}", stage="sweep")
            cells.extend((kind, a) for a in amounts)
    return cells


def run_experiment(params: ScenarioParams, seed: int, rig: str, spec: DistortionSpec,
                   settings: Optional[CalibrationSettings] = None) -> tuple[EvaluationReport, float]:
    """One seeded simulate, distort and calibrate run; returns (report, runtime seconds)."""
    scn = generate_scenario(params, seed, make_rig(rig))
    rendering = render_frames(scn)
    frames = apply_distortion(rendering.frames, spec)
    start = time.perf_counter()
    result = run_offline(frames, rendering.ego, scn.sensors, scn.vehicle, settings, true_calibration(scn))
    return result.report, time.perf_counter() - start


def run_cell(cell: SweepCell) -> dict:
    """All repetitions of one grid cell as one CSV row."""
    reports: list[EvaluationReport] = []
    runtimes: list[float] = []
    failures: list[str] = []
    for rep in range(cell.reps):
        seed = cell.seed + rep
        spec = DistortionSpec(cell.kind, cell.amount, seed)
        try:
            report, runtime = run_experiment(cell.params, seed, cell.rig, spec, cell.settings)
        except CalibrationError as exc:
            failures.append(type(exc).__name__)
            continue
        reports.append(report)
        runtimes.append(runtime)

    if not reports:
        status = f"failed:{failures[0]}" if failures else "failed"
        nan = float("nan")
        return dict(zip(COLUMNS, [cell.kind, cell.amount, nan, nan, nan, nan, nan, 0, status]))
    merged = merge_reports(reports)
    status = "ok" if not failures else f"partial:{len(failures)}/{cell.reps}"
    return {
        "kind": cell.kind,
        "amount": cell.amount,
        "translation_mean": merged.translation_mean,
        "translation_std": merged.translation_std,
        "orientation_mean": merged.orientation_mean,
        "orientation_std": merged.orientation_std,
        "runtime": float(np.mean(runtimes)),
        "reps": len(reports),
        "status": status,
    }


def sweep_distortions(params: Optional[ScenarioParams] = None, grid: Optional[Sequence[tuple[str, float]]] = None,
                      reps: int = 10, seed: int = 0, workers: int = 1, rig: str = "ring",
                      settings: Optional[CalibrationSettings] = None) -> pd.DataFrame:
    """
    Run every (kind, amount) cell of the grid and tabulate the errors.

    Repetition r of every cell uses scenario seed `seed + r`, so all cells of
    a repetition share one scene and differ only in the distortion.
    """
    if reps < 1:
        raise InvalidParams("reps must be at least 1", stage="sweep")
    params = params or ScenarioParams()
    cfg = resolve(settings)
    cells = [
        SweepCell(kind, float(amount), reps, seed, params, rig, cfg)
        for kind, amount in (grid if grid is not None else parse_grid(None))
    ]
    log = get_run_logger()
    with log.timed("sweep", "distortions", inputs={"cells": len(cells), "reps": reps, "workers": workers}) as out:
        if workers > 1 and len(cells) > 1:
            with Pool(min(workers, len(cells))) as pool:
                rows = pool.map(run_cell, cells)
        else:
            rows = [run_cell(cell) for cell in cells]
        out["failed_cells"] = sum(1 for r in rows if r["status"].startswith("failed"))
    return pd.DataFrame(rows, columns=COLUMNS)


def write_sweep(table: pd.DataFrame, path: str):
    table.to_csv(path, index=False, float_format="%.6g")

