"""Parameter sweeps over scenarios and seed aggregation."""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .metrics import MetricsReport, report_row
from .simcore import Scenario, run
from .traffic import get_model


class SweepAxis(str, Enum):
    SERVER_DELAY = "delay"
    BANDWIDTH = "bandwidth"
    TRAFFIC_MODEL = "traffic"
    SEED = "seed"
    SLEEP = "sleep"


@dataclass
class SweepSpec:
    base: Scenario
    axes: dict = field(default_factory=dict)  # SweepAxis -> list of values

    def __post_init__(self):
        self.axes = {SweepAxis(k): list(v) for k, v in self.axes.items()}
        for axis, values in self.axes.items():
            if not values:
                raise ValueError(f"sweep axis {axis.value} has no values")

    def grid(self) -> list[Scenario]:
        keys = list(self.axes)
        points = itertools.product(*(self.axes[k] for k in keys)) if keys else [()]
        return [apply_point(self.base, dict(zip(keys, values))) for values in points]


def apply_point(base: Scenario, point: dict) -> Scenario:
    sc = replace(base)
    for axis, value in point.items():
        axis = SweepAxis(axis)
        if axis is SweepAxis.SERVER_DELAY:
            sc = replace(sc, server_delay=float(value))
        elif axis is SweepAxis.BANDWIDTH:
            sc = replace(sc, radio=replace(sc.radio, bandwidth=float(value)))
        elif axis is SweepAxis.TRAFFIC_MODEL:
            sc = replace(sc, traffic=get_model(value) if isinstance(value, str) else value)
        elif axis is SweepAxis.SEED:
            sc = replace(sc, seed=int(value))
        elif axis is SweepAxis.SLEEP:
            sc = replace(sc, sleep_enabled=bool(value))
    return sc


@dataclass
class SweepRow:
    scenario: Scenario
    report: MetricsReport | None
    error: str = ""

    def row(self) -> dict:
        return report_row(self.report, self.scenario.summary(), self.error)


def _run_one(scenario: Scenario) -> SweepRow:
    try:
        return SweepRow(scenario, run(scenario))
    except Exception as exc:  # one bad grid point must not abort the sweep
        return SweepRow(scenario, None, f"{type(exc).__name__}: {exc}")


def run_sweep(spec: SweepSpec, workers: int | None = None) -> list[SweepRow]:
    """Run every grid point; with ``workers > 1`` points run in separate processes."""
    grid = spec.grid()
    if workers and workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_run_one, grid))
    return [_run_one(sc) for sc in grid]


def sort_key(row: dict) -> tuple:
    return tuple(str(row.get(k)) for k in ("model", "bandwidth_bps", "server_delay_ms", "sleep_enabled", "seed"))


def aggregate(rows: list[SweepRow], metric: str = "read_ratio") -> list[dict]:
    """Group rows that differ only by seed; report mean, standard error and count."""
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        d = r.row()
        key = (d["model"], d["bandwidth_bps"], d["server_delay_ms"], d["sleep_enabled"], d["sleep_strategy"])
        v = d.get(metric)
        if v is not None:
            groups.setdefault(key, []).append(float(v))
    out = []
    for key, values in groups.items():
        a = np.asarray(values)
        se = float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else None
        out.append({
            "model": key[0], "bandwidth_bps": key[1], "server_delay_ms": key[2],
            "sleep_enabled": key[3], "sleep_strategy": key[4],
            f"{metric}_mean": float(a.mean()), f"{metric}_stderr": se, "n": int(a.size),
        })
    return out


def parse_sweep_arg(text: str) -> tuple[SweepAxis, list]:
    """``delay=0,5,10`` (ms), ``bandwidth=128k,1M``, ``traffic=light,heavy``, ``seed=1,2``."""
    from .config import _coerce, _number  # shared unit handling

    name, _, values = text.partition("=")
    try:
        axis = SweepAxis(name.strip().lower())
    except ValueError:
        raise ValueError(f"unknown sweep axis {name!r}") from None
    items = [v.strip() for v in values.split(",") if v.strip()]
    if not items:
        raise ValueError(f"sweep axis {axis.value} has no values")
    if axis is SweepAxis.SERVER_DELAY:
        parsed = [_number(v if v[-1].isalpha() else v + "ms", "sweep delay") for v in items]
    elif axis is SweepAxis.BANDWIDTH:
        parsed = [_number(v, "sweep bandwidth") for v in items]
    elif axis is SweepAxis.SEED:
        parsed = [int(v) for v in items]
    elif axis is SweepAxis.SLEEP:
        parsed = [_coerce(v, bool, "sweep sleep") for v in items]
    else:
        parsed = [get_model(v).name for v in items]
    return axis, parsed
