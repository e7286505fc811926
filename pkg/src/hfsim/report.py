"""Comparison reports: aggregate repeated runs, render tables, diff."""

from __future__ import annotations

import json
from typing import Optional

from . import __version__
from .config import ScenarioConfig, config_digest
from .errors import ReportMismatchError
from .simulation import ScenarioResult
from .timebase import seconds_from_ticks

SCHEMA_VERSION = 1


def _latencies_s(result: ScenarioResult) -> list[float]:
    return [
        seconds_from_ticks(d.detected_time - d.tamper_time)
        for d in result.detections
        if d.tamper_time is not None
    ]


def build_report(config: ScenarioConfig, results: dict) -> dict:
    """Aggregate per-strategy results (keyed by seed) into one report.

    The report contains no timestamps or host details, so identical
    (config, seed) inputs serialize byte-identically.
    """
    strategies = {}
    for name, runs in results.items():
        overheads = [100.0 * r.overhead_fraction for r in runs]
        latencies = [lat for r in runs for lat in _latencies_s(r)]
        attack_agg: dict[str, dict] = {}
        for r in runs:
            for outcome in r.attack_outcomes:
                agg = attack_agg.setdefault(outcome.label, {
                    "label": outcome.label, "kind": outcome.kind,
                    "attempted": 0, "applied": 0, "trapped": 0,
                    "detected_runs": 0, "evaded_runs": 0,
                })
                agg["attempted"] += outcome.attempted
                agg["applied"] += outcome.applied
                agg["trapped"] += outcome.trapped
                if outcome.detected_at is not None:
                    agg["detected_runs"] += 1
                if outcome.evaded:
                    agg["evaded_runs"] += 1
        n = len(runs)
        strategies[name] = {
            "kind": runs[0].strategy_kind,
            "seeds": [r.seed for r in runs],
            "overhead_pct": {
                "mean": sum(overheads) / n,
                "min": min(overheads),
                "max": max(overheads),
            },
            "detection": {
                "count": sum(len(r.detections) for r in runs),
                "latency_mean_s": (sum(latencies) / len(latencies)) if latencies else None,
                "latency_worst_s": max(latencies) if latencies else None,
            },
            "traps": sum(len(r.trap_records) for r in runs),
            "per_event_added_us": {
                "syscall": sum(r.per_event_added["syscall"] for r in runs) / n / 1000.0,
                "ctxswitch": sum(r.per_event_added["ctxswitch"] for r in runs) / n / 1000.0,
            },
            "attacks": [attack_agg[label] for label in sorted(attack_agg)],
            "runs": [r.to_json_dict() for r in runs],
        }
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": "hfsim",
        "tool_version": __version__,
        "config_digest": config_digest(config),
        "repeats": config.repeats,
        "base_seed": config.seed,
        "strategies": strategies,
    }


def report_to_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def render_text(report: dict, include_attacks: bool = True) -> str:
    """Human-readable summary table for one report."""
    lines = [
        f"scenario {report['config_digest']}  "
        f"repeats={report['repeats']}  base_seed={report['base_seed']}",
        "",
        f"{'strategy':<12} {'overhead% mean':>14} {'min':>8} {'max':>8} "
        f"{'det worst s':>12} {'det mean s':>11} {'traps':>6}",
    ]
    for name, s in report["strategies"].items():
        det = s["detection"]
        worst = f"{det['latency_worst_s']:.4f}" if det["latency_worst_s"] is not None else "-"
        mean = f"{det['latency_mean_s']:.4f}" if det["latency_mean_s"] is not None else "-"
        lines.append(
            f"{name:<12} {s['overhead_pct']['mean']:>14.3f} "
            f"{s['overhead_pct']['min']:>8.3f} {s['overhead_pct']['max']:>8.3f} "
            f"{worst:>12} {mean:>11} {s['traps']:>6}"
        )
    lines.append("")
    lines.append(f"{'strategy':<12} {'added us/syscall':>17} {'added us/ctxswitch':>19}")
    for name, s in report["strategies"].items():
        pe = s["per_event_added_us"]
        lines.append(f"{name:<12} {pe['syscall']:>17.3f} {pe['ctxswitch']:>19.3f}")
    for name, s in report["strategies"].items():
        if not s["attacks"] or not include_attacks:
            continue
        lines.append("")
        lines.append(f"attack outcomes under {name}:")
        for a in s["attacks"]:
            detected = "detected" if a["detected_runs"] else "undetected"
            evaded = " EVADED" if a["evaded_runs"] else ""
            lines.append(
                f"  {a['label']:<20} {a['kind']:<12} attempted={a['attempted']} "
                f"applied={a['applied']} trapped={a['trapped']} {detected}{evaded}"
            )
    lines.append("")
    return "\n".join(lines)


def _relative_exceeds(a: Optional[float], b: Optional[float], tol_pct: float) -> bool:
    if a is None or b is None:
        return a != b
    if a == b:
        return False
    if a == 0:
        return True
    return abs(b - a) / abs(a) * 100.0 > tol_pct


def diff_reports(a: dict, b: dict, tol_pct: float = 1.0) -> tuple[list[str], bool]:
    """Per-metric deltas between two reports of the same scenario.

    Returns (lines, flagged). Overhead deltas are compared against the
    tolerance in percentage points (the metric is already a percentage);
    time and count metrics are compared relatively. Only differing metrics
    produce lines, so identical reports diff to nothing.
    """
    if a.get("config_digest") != b.get("config_digest"):
        raise ReportMismatchError(
            f"config digests differ: {a.get('config_digest')} vs {b.get('config_digest')}"
        )
    lines: list[str] = []
    flagged = False

    names = sorted(set(a["strategies"]) | set(b["strategies"]))
    for name in names:
        sa, sb = a["strategies"].get(name), b["strategies"].get(name)
        if sa is None or sb is None:
            lines.append(f"{name}: present in only one report FLAG")
            flagged = True
            continue
        oa = sa["overhead_pct"]["mean"]
        ob = sb["overhead_pct"]["mean"]
        if oa != ob:
            flag = abs(ob - oa) > tol_pct
            flagged |= flag
            lines.append(
                f"{name}: overhead mean {oa:.4f}% -> {ob:.4f}% "
                f"(delta {ob - oa:+.4f} pts){' FLAG' if flag else ''}"
            )
        for metric in ("latency_worst_s", "latency_mean_s"):
            va, vb = sa["detection"][metric], sb["detection"][metric]
            if va != vb:
                flag = _relative_exceeds(va, vb, tol_pct)
                flagged |= flag
                lines.append(
                    f"{name}: detection {metric} {va} -> {vb}"
                    f"{' FLAG' if flag else ''}"
                )
        if sa["traps"] != sb["traps"]:
            flag = _relative_exceeds(float(sa["traps"]), float(sb["traps"]), tol_pct)
            flagged |= flag
            lines.append(
                f"{name}: traps {sa['traps']} -> {sb['traps']}{' FLAG' if flag else ''}"
            )
    return lines, flagged
