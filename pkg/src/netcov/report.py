"""Report emission: canonical JSON, CSV dumps and a static HTML page.

``report.json`` is byte-stable for identical runs: keys are sorted, floats
use Python's shortest round-trip spelling, and wall-clock timings live in a
separate ``timings.json`` so they never perturb the canonical report.
"""

from __future__ import annotations

import csv
import html
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .comparison import ComparisonRun
from .coverage import CoverageResult
from .stats import GrowthCurve, ObligationStats

SCHEMA_VERSION = 1

_HTML_PAIR_ROW_CAP = 500


@dataclass
class ReportBundle:
    model_info: dict
    config: dict
    granularity: str
    results: dict[str, CoverageResult]
    stats: dict[str, ObligationStats]
    growth: dict[str, GrowthCurve] = field(default_factory=dict)
    profile_info: dict | None = None
    accuracy: float | None = None
    comparison: ComparisonRun | None = None
    timings: dict[str, float] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        for key, result in self.results.items():
            if key != result.key:
                raise ValueError(f"result {result.key!r} filed under key {key!r}")


def _jsonable(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def report_dict(bundle: ReportBundle) -> dict:
    """The canonical report structure written to report.json."""
    criteria = []
    for key in sorted(bundle.results):
        r = bundle.results[key]
        s = bundle.stats.get(key)
        entry = {
            "key": r.key,
            "family": r.family,
            "params": _jsonable(r.params),
            "total_obligations": r.total,
            "covered": r.covered,
            "percent": r.percent,
        }
        if s is not None:
            entry["hit_count_stats"] = {
                "min": s.min, "max": s.max, "avg": s.avg, "std": s.std, "var": s.var,
            }
        criteria.append(entry)
    out = {
        "schema_version": SCHEMA_VERSION,
        "model": _jsonable(bundle.model_info),
        "config": _jsonable(bundle.config),
        "granularity": bundle.granularity,
        "profile": _jsonable(bundle.profile_info),
        "accuracy": bundle.accuracy,
        "criteria": criteria,
        "growth": {
            key: [[int(n), float(p)] for n, p in bundle.growth[key].points]
            for key in sorted(bundle.growth)
        },
        "warnings": list(bundle.warnings),
    }
    if bundle.comparison is not None:
        c = bundle.comparison
        out["comparison"] = {
            "baseline": c.baseline,
            "datasets": [
                {
                    "name": name,
                    "coverage": {k: c.coverages[name][k] for k in sorted(c.coverages[name])},
                    "delta": {k: c.deltas[name][k] for k in sorted(c.deltas[name])},
                    "ncoverage": {k: c.ncoverages[name][k] for k in sorted(c.ncoverages[name])},
                }
                for name in c.dataset_names
            ],
            "degenerate": {k: bool(v) for k, v in sorted(c.degenerate.items())},
        }
    else:
        out["comparison"] = None
    return out


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def coverage_csv(bundle: ReportBundle) -> str:
    rows = []
    for key in sorted(bundle.results):
        r = bundle.results[key]
        rows.append([r.key, r.total, r.covered, repr(r.percent)])
    return _csv_text(["criterion", "total", "covered", "percent"], rows)


def hitcounts_csv(bundle: ReportBundle) -> str:
    rows = []
    for key in sorted(bundle.results):
        for crit, layer, unit, section, count in bundle.results[key].rows():
            rows.append([crit, layer, unit, section, count])
    return _csv_text(["criterion", "layer", "unit", "section", "hit_count"], rows)


def growth_csv(bundle: ReportBundle) -> str:
    rows = []
    for key in sorted(bundle.growth):
        for n, pct in bundle.growth[key].points:
            rows.append([key, n, repr(float(pct))])
    return _csv_text(["criterion", "tests_seen", "percent"], rows)


def compare_csv(run: ComparisonRun) -> str:
    rows = []
    for name in run.dataset_names:
        for key in sorted(run.coverages[name]):
            rows.append([
                name, key,
                repr(run.coverages[name][key]),
                repr(run.deltas[name][key]),
                repr(run.ncoverages[name][key]),
            ])
    return _csv_text(["dataset", "criterion", "coverage", "delta", "ncoverage"], rows)


def heat_color(count: int, max_count: int) -> str:
    """White at zero hits to pure red at the report maximum, linear in between."""
    if max_count <= 0 or count <= 0:
        return "#FFFFFF"
    ratio = min(count / max_count, 1.0)
    gb = int(255 * (1.0 - ratio) + 0.5)
    return f"#FF{gb:02X}{gb:02X}"


def _pick_unit_criterion(bundle: ReportBundle) -> str | None:
    """Criterion whose per-unit hit counts drive the layer heat maps."""
    nc_keys = sorted(
        (k for k in bundle.results if k.startswith("nc@")),
        key=lambda k: float(k.split("@", 1)[1]),
    )
    if nc_keys:
        return nc_keys[0]
    for key in sorted(bundle.results):
        if bundle.results[key].family in ("tknc", "snac"):
            return key
    return None


def _esc(text) -> str:
    return html.escape(str(text), quote=True)


def _stat_cell(x: float) -> str:
    return f"{x:.4f}".rstrip("0").rstrip(".") or "0"


def _growth_svg(curve: GrowthCurve) -> str:
    if len(curve.points) < 2:
        return ""
    w, h = 240, 60
    max_n = curve.points[-1][0]
    pts = []
    for n, pct in curve.points:
        x = 4 + (w - 8) * (n / max_n if max_n else 0.0)
        y = 4 + (h - 8) * (1.0 - pct / 100.0)
        pts.append(f"{x:.1f},{y:.1f}")
    return (
        f'<svg class="growth" width="{w}" height="{h}" viewBox="0 0 {w} {h}">'
        f'<rect x="0" y="0" width="{w}" height="{h}" class="growth-bg"/>'
        f'<polyline points="{" ".join(pts)}" fill="none" stroke="#C0392B" stroke-width="1.5"/>'
        "</svg>"
    )


def render_html(bundle: ReportBundle) -> str:
    """One self-contained page: summary, per-layer heat maps, pair tables."""
    out: list[str] = []
    model_name = bundle.model_info.get("name", "model")
    out.append("<!DOCTYPE html>")
    out.append('<html lang="en"><head><meta charset="utf-8">')
    out.append(f"<title>{_esc(model_name)} coverage report</title>")
    out.append(
        "<style>\n"
        "body{font-family:sans-serif;margin:1.5em;color:#222;background:#FFF}\n"
        "table{border-collapse:collapse;margin:0.6em 0}\n"
        "th,td{border:1px solid #BBB;padding:2px 8px;font-size:13px;text-align:right}\n"
        "th{background:#EEE}\n"
        "td.name,th.name{text-align:left}\n"
        ".unit-cell{display:inline-block;width:14px;height:14px;margin:1px;"
        "border:1px solid #999;vertical-align:middle}\n"
        ".unit-cell.uncovered{border:1px solid #222;border-style:dashed}\n"
        ".degree-cell{display:inline-block;width:12px;height:12px;margin:1px;"
        "border:1px solid #CCC;vertical-align:middle}\n"
        ".layer-grid{line-height:10px;max-width:64em}\n"
        ".growth-bg{fill:#FAFAFA;stroke:#DDD}\n"
        ".warn{color:#A33;font-weight:bold}\n"
        "h2{border-bottom:1px solid #CCC;padding-bottom:2px}\n"
        "</style></head><body>"
    )
    out.append(f"<h1>Coverage report: {_esc(model_name)}</h1>")
    out.append(
        f"<p>granularity: <b>{_esc(bundle.granularity)}</b>; "
        f"task: {_esc(bundle.model_info.get('task', '?'))}; "
        f"input shape: {_esc(bundle.model_info.get('input_shape', '?'))}</p>"
    )
    if bundle.profile_info:
        out.append(
            f"<p>profile: {bundle.profile_info.get('training_count', '?')} training inputs</p>"
        )
    if bundle.accuracy is not None:
        out.append(f"<p>test accuracy: <b>{bundle.accuracy:.2f}%</b></p>")
    for warning in bundle.warnings:
        out.append(f'<p class="warn">warning: {_esc(warning)}</p>')

    out.append("<h2>Criteria</h2><table><tr>"
               "<th class=\"name\">criterion</th><th>covered</th><th>total</th><th>percent</th>"
               "<th>min</th><th>max</th><th>avg</th><th>std</th><th>var</th></tr>")
    for key in sorted(bundle.results):
        r = bundle.results[key]
        s = bundle.stats.get(key)
        stat_cells = (
            "".join(f"<td>{_stat_cell(v)}</td>" for v in (s.min, s.max, s.avg, s.std, s.var))
            if s else "<td></td>" * 5
        )
        out.append(
            f'<tr><td class="name">{_esc(r.key)}</td><td>{r.covered}</td><td>{r.total}</td>'
            f"<td>{r.percent:.2f}</td>{stat_cells}</tr>"
        )
    out.append("</table>")

    # One section per coverage-relevant layer, one cell per unit.
    unit_key = _pick_unit_criterion(bundle)
    layers = bundle.model_info.get("relevant_layers", [])
    counts = None
    max_count = 0
    if unit_key is not None:
        counts = np.asarray(bundle.results[unit_key].hit_counts)
        max_count = int(counts.max()) if counts.size else 0
        out.append(
            f"<h2>Layer maps ({_esc(unit_key)} hit counts)</h2>"
            "<p>white = never hit, red = report maximum "
            f"({max_count}); dashed border marks never-covered units</p>"
        )
    else:
        out.append("<h2>Layer maps</h2><p>no per-unit criterion in this run</p>")
    offset = 0
    unit_counts = bundle.model_info.get("unit_counts") or (
        list(bundle.results[unit_key].unit_counts) if unit_key else []
    )
    for ordinal, n_units in enumerate(unit_counts):
        meta = layers[ordinal] if ordinal < len(layers) else {}
        title = (
            f"layer {ordinal}: model layer {meta.get('model_layer', '?')} "
            f"({meta.get('kind', '?')}), output {meta.get('output_shape', '?')}, "
            f"{n_units} units"
        )
        out.append(f"<h3>{_esc(title)}</h3>")
        cells = []
        never = []
        for u in range(n_units):
            if counts is not None:
                c = int(counts[offset + u])
                color = heat_color(c, max_count)
                cls = "unit-cell" if c > 0 else "unit-cell uncovered"
                if c == 0:
                    never.append(u)
                tip = f"unit {u}: {c} hits"
            else:
                color = "#FFFFFF"
                cls = "unit-cell"
                tip = f"unit {u}"
            cells.append(f'<span class="{cls}" style="background:{color}" title="{_esc(tip)}"></span>')
        out.append(f'<div class="layer-grid">{"".join(cells)}</div>')
        if counts is not None:
            if never:
                shown = ", ".join(str(u) for u in never[:40])
                more = f" and {len(never) - 40} more" if len(never) > 40 else ""
                out.append(f'<p class="warn">never covered: units {shown}{more}</p>')
            else:
                out.append("<p>all units covered</p>")
        offset += n_units

    mcdc_keys = [k for k in sorted(bundle.results) if bundle.results[k].family == "mcdc"]
    if mcdc_keys:
        out.append("<h2>MC/DC pair coverage</h2>")
        for key in mcdc_keys:
            r = bundle.results[key]
            out.append(f"<h3>{_esc(key)}: {r.covered}/{r.total} pairs ({r.percent:.2f}%)</h3>")
            for pair_idx, mat in enumerate(r.hit_counts):
                cond_deg = np.count_nonzero(mat, axis=1)
                dec_deg = np.count_nonzero(mat, axis=0)
                out.append(
                    f"<p>layers {pair_idx} &rarr; {pair_idx + 1}: "
                    f"{int(np.count_nonzero(mat))} covered pairs</p>"
                )
                for label, deg in (("condition", cond_deg), ("decision", dec_deg)):
                    top = int(deg.max()) if deg.size else 0
                    strip = "".join(
                        f'<span class="degree-cell" style="background:{heat_color(int(d), top)}" '
                        f'title="{label} unit {u}: {int(d)} covered pairs"></span>'
                        for u, d in enumerate(deg)
                    )
                    out.append(f'<div class="layer-grid">{label} degree: {strip}</div>')
                covered_rows = np.argwhere(mat > 0)
                if len(covered_rows):
                    out.append("<table><tr><th>condition unit</th><th>decision unit</th>"
                               "<th>hit pairs</th></tr>")
                    for i, j in covered_rows[:_HTML_PAIR_ROW_CAP]:
                        out.append(
                            f'<tr class="pair-row"><td>{int(i)}</td><td>{int(j)}</td>'
                            f"<td>{int(mat[i, j])}</td></tr>"
                        )
                    out.append("</table>")
                    if len(covered_rows) > _HTML_PAIR_ROW_CAP:
                        out.append(
                            f"<p>listing capped at {_HTML_PAIR_ROW_CAP} of "
                            f"{len(covered_rows)} covered pairs</p>"
                        )

    if bundle.growth:
        out.append("<h2>Coverage growth</h2>")
        for key in sorted(bundle.growth):
            curve = bundle.growth[key]
            out.append(f"<h3>{_esc(key)}</h3>")
            out.append(_growth_svg(curve))
            out.append("<table><tr><th>tests seen</th><th>percent</th></tr>")
            for n, pct in curve.points:
                out.append(f"<tr><td>{n}</td><td>{pct:.3f}</td></tr>")
            out.append("</table>")

    if bundle.comparison is not None:
        c = bundle.comparison
        out.append(f"<h2>Dataset comparison (baseline: {_esc(c.baseline)})</h2>")
        out.append("<table><tr><th class=\"name\">dataset</th><th class=\"name\">criterion</th>"
                   "<th>coverage</th><th>delta</th><th>ncoverage</th></tr>")
        for name in c.dataset_names:
            for key in sorted(c.coverages[name]):
                out.append(
                    f'<tr><td class="name">{_esc(name)}</td><td class="name">{_esc(key)}</td>'
                    f"<td>{c.coverages[name][key]:.3f}</td>"
                    f"<td>{c.deltas[name][key]:+.3f}</td>"
                    f"<td>{c.ncoverages[name][key]:+.4f}</td></tr>"
                )
        out.append("</table>")
        flagged = [k for k, v in sorted(c.degenerate.items()) if v]
        if flagged:
            out.append(
                f'<p class="warn">degenerate criteria (all deltas equal): {_esc(", ".join(flagged))}</p>'
            )

    if bundle.timings:
        out.append("<h2>Timings</h2><table><tr><th class=\"name\">step</th><th>seconds</th></tr>")
        for key in sorted(bundle.timings):
            out.append(
                f'<tr><td class="name">{_esc(key)}</td><td>{bundle.timings[key]:.4f}</td></tr>'
            )
        out.append("</table>")

    out.append("</body></html>")
    return "\n".join(out) + "\n"


def emit_reports(bundle: ReportBundle, outdir) -> dict[str, Path]:
    """Write every report artifact under ``outdir`` and return their paths."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}

    paths["report.json"] = out / "report.json"
    paths["report.json"].write_text(_dump_json(report_dict(bundle)), encoding="utf-8")

    paths["coverage.csv"] = out / "coverage.csv"
    paths["coverage.csv"].write_text(coverage_csv(bundle), encoding="utf-8")

    paths["hitcounts.csv"] = out / "hitcounts.csv"
    paths["hitcounts.csv"].write_text(hitcounts_csv(bundle), encoding="utf-8")

    paths["growth.csv"] = out / "growth.csv"
    paths["growth.csv"].write_text(growth_csv(bundle), encoding="utf-8")

    if bundle.comparison is not None:
        comp = report_dict(bundle)["comparison"]
        paths["compare.csv"] = out / "compare.csv"
        paths["compare.csv"].write_text(compare_csv(bundle.comparison), encoding="utf-8")
        paths["compare.json"] = out / "compare.json"
        paths["compare.json"].write_text(_dump_json(comp), encoding="utf-8")

    paths["timings.json"] = out / "timings.json"
    paths["timings.json"].write_text(_dump_json(_jsonable(bundle.timings)), encoding="utf-8")

    paths["report.html"] = out / "report.html"
    paths["report.html"].write_text(render_html(bundle), encoding="utf-8")
    return paths
