"""Run-level metrics and their CSV / JSON / text renderings."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass
class Stat:
    count: int = 0
    mean: float | None = None
    min: float | None = None
    max: float | None = None
    p95: float | None = None

    @classmethod
    def of(cls, values) -> "Stat":
        a = np.asarray(list(values), dtype=float)
        if a.size == 0:
            return cls()
        return cls(int(a.size), float(a.mean()), float(a.min()), float(a.max()), float(np.percentile(a, 95)))


@dataclass
class MetricsReport:
    scenario: dict
    n_spawned: int = 0
    n_authenticated: int = 0
    n_missed: int = 0
    n_in_progress: int = 0
    n_completed: int = 0
    n_read: int = 0
    read_ratio: float | None = None
    latency: Stat = field(default_factory=Stat)
    air_latency: Stat = field(default_factory=Stat)
    awake_fraction: Stat = field(default_factory=Stat)
    dwell: Stat = field(default_factory=Stat)
    awake_seconds: Stat = field(default_factory=Stat)
    energy_mJ: Stat = field(default_factory=Stat)
    slot_counts: dict = field(default_factory=lambda: {"idle": 0, "success": 0, "collision": 0})
    reader_awake_fraction: float = 0.0
    server_rejects: dict = field(default_factory=dict)
    false_accepts: int = 0
    attack_verdicts: list | None = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# Stable column order for CSV output.
COLUMNS = [
    "model", "bandwidth_bps", "server_delay_ms", "seed", "sleep_enabled", "sleep_strategy",
    "protocol_profile", "duration_s", "n_spawned", "n_completed", "n_read", "read_ratio",
    "latency_mean_ms", "latency_min_ms", "latency_p95_ms", "air_latency_mean_ms",
    "dwell_mean_s", "awake_fraction", "energy_mean_mJ", "slots_idle", "slots_success",
    "slots_collision", "reader_awake_fraction", "error",
]

SLEEP_TABLE_COLUMNS = ["model", "read_latency_ms", "dwell_s", "awake_fraction"]


def _ms(x):
    return None if x is None else 1e3 * x


def report_row(report: MetricsReport | None, scenario: dict | None = None, error: str = "") -> dict:
    if report is None:
        row = {c: None for c in COLUMNS}
        row.update(_scenario_cols(scenario or {}))
        row["error"] = error
        return row
    row = _scenario_cols(report.scenario)
    row.update(
        n_spawned=report.n_spawned,
        n_completed=report.n_completed,
        n_read=report.n_read,
        read_ratio=report.read_ratio,
        latency_mean_ms=_ms(report.latency.mean),
        latency_min_ms=_ms(report.latency.min),
        latency_p95_ms=_ms(report.latency.p95),
        air_latency_mean_ms=_ms(report.air_latency.mean),
        dwell_mean_s=report.dwell.mean,
        awake_fraction=report.awake_fraction.mean,
        energy_mean_mJ=report.energy_mJ.mean,
        slots_idle=report.slot_counts["idle"],
        slots_success=report.slot_counts["success"],
        slots_collision=report.slot_counts["collision"],
        reader_awake_fraction=report.reader_awake_fraction,
        error=error,
    )
    return row


def _scenario_cols(s: dict) -> dict:
    return {
        "model": s.get("model"),
        "bandwidth_bps": s.get("bandwidth"),
        "server_delay_ms": _ms(s.get("server_delay")),
        "seed": s.get("seed"),
        "sleep_enabled": s.get("sleep_enabled"),
        "sleep_strategy": s.get("sleep_strategy"),
        "protocol_profile": s.get("protocol_profile"),
        "duration_s": s.get("duration"),
    }


def sleep_table_row(report: MetricsReport) -> dict:
    return {
        "model": report.scenario.get("model"),
        "read_latency_ms": _ms(report.air_latency.mean),
        "dwell_s": report.dwell.mean,
        "awake_fraction": report.awake_fraction.mean,
    }


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if math.isnan(v):
            return "nan"
        return f"{float(v):.6g}"
    return str(v)


def emit_csv(rows, columns=COLUMNS) -> bytes:
    """Header plus one line per row; values rendered with 6 significant digits."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        if isinstance(row, MetricsReport):
            row = report_row(row)
        writer.writerow([format_value(row.get(c)) for c in columns])
    return buf.getvalue().encode()


def parse_csv(data: bytes) -> list[dict]:
    return list(csv.DictReader(io.StringIO(data.decode())))


THRESHOLDS = {
    "read_ratio": 0.90,
    "air_latency_ms": (1.0, 1.6),
    "awake_fraction": (0.15, 0.30),
    "energy_saving": (0.70, 0.85),
}


def energy_saving(with_sleep: MetricsReport, without_sleep: MetricsReport) -> float | None:
    a, b = with_sleep.awake_seconds.mean, without_sleep.awake_seconds.mean
    if a is None or not b:
        return None
    return 1.0 - a / b


def summarize(report: MetricsReport, check: bool = False, baseline: MetricsReport | None = None) -> tuple[str, bool]:
    """One-screen summary. With ``check`` each applicable threshold gets a PASS/FAIL tag.

    Returns the text and whether every applied check passed.
    """
    s = report.scenario
    lines = [
        f"scenario: {s.get('model')} traffic, {format_value(s.get('bandwidth'))} bit/s, "
        f"server delay {format_value(_ms(s.get('server_delay')))} ms, seed {s.get('seed')}, "
        f"sleep {'on' if s.get('sleep_enabled') else 'off'} ({s.get('sleep_strategy')}), "
        f"profile {s.get('protocol_profile')}",
        f"tags: spawned {report.n_spawned}, authenticated {report.n_authenticated}, "
        f"missed {report.n_missed}, in progress {report.n_in_progress}",
    ]
    ok = True

    def mark(passed: bool) -> str:
        nonlocal ok
        ok &= passed
        return "PASS" if passed else "FAIL"

    rr = report.read_ratio
    rr_txt = "null (no completed passages)" if rr is None else f"{rr:.4f} ({report.n_read}/{report.n_completed})"
    line = f"read_ratio: {rr_txt}"
    if check and rr is not None:
        line = f"read_ratio ≥ {THRESHOLDS['read_ratio']:.2f}: {mark(rr >= THRESHOLDS['read_ratio'])}  [{rr:.4f}]"
    lines.append(line)
    if report.air_latency.count:
        lat = 1e3 * report.air_latency.mean
        line = f"air-interface read latency: mean {lat:.3f} ms (n={report.air_latency.count})"
        if check and s.get("bandwidth") == 1e6:
            lo, hi = THRESHOLDS["air_latency_ms"]
            line += f"  in [{lo}, {hi}] ms: {mark(lo <= lat <= hi)}"
        lines.append(line)
    if report.dwell.count:
        lines.append(f"dwell: mean {report.dwell.mean:.3f} s (n={report.dwell.count})")
    if report.awake_fraction.count:
        af = report.awake_fraction.mean
        line = f"awake fraction: {100 * af:.2f}%"
        if check and s.get("sleep_enabled") and s.get("bandwidth") == 1e6:
            lo, hi = THRESHOLDS["awake_fraction"]
            line += f"  in [{lo:.0%}, {hi:.0%}]: {mark(lo <= af <= hi)}"
        lines.append(line)
    if baseline is not None:
        saving = energy_saving(report, baseline)
        if saving is not None:
            lo, hi = THRESHOLDS["energy_saving"]
            line = f"energy saving vs sleep off: {100 * saving:.1f}% (claim: 75-80%)"
            if check:
                line += f"  in [{lo:.0%}, {hi:.0%}]: {mark(lo <= saving <= hi)}"
            lines.append(line)
    c = report.slot_counts
    lines.append(f"slots: idle {c['idle']}, success {c['success']}, collision {c['collision']}; "
                 f"reader awake {100 * report.reader_awake_fraction:.2f}%")
    for v in report.attack_verdicts or []:
        line = f"{v['attack']} successes: {v['successes']}/{v['attempts']}"
        if v["attack"] == "tracking":
            line = f"tracking classifier accuracy: {v['accuracy']:.3f} (linkable: {v['linkable']})"
            if check:
                line += f"  {mark(not v['linkable'])}"
        elif check:
            line += f"  {mark(v['successes'] == 0)}"
        lines.append(line)
    return "\n".join(lines), ok
