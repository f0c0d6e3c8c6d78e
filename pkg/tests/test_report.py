import csv
import io
import json

import numpy as np
import pytest

from netcov.comparison import normalized_differences
from netcov.coverage import CoverageResult, NeuronCoverage
from netcov.inference import trace_dataset
from netcov.mcdc import run_mcdc
from netcov.report import (ReportBundle, emit_reports, heat_color, render_html, report_dict)
from netcov.stats import GrowthCurve, summarize
from netcov.synth import build_demo_convnet, gaussian_images


@pytest.fixture(scope="module")
def bundle():
    model = build_demo_convnet()
    train = gaussian_images(60, (1, 10, 10), seed=70)
    test = gaussian_images(15, (1, 10, 10), seed=71, spread=0.9)
    from netcov.profiling import profile_dataset
    prof = profile_dataset(model, train.inputs, "channel")
    traces = trace_dataset(model, test.inputs, "channel")
    cov = NeuronCoverage(model.unit_counts("channel"), granularity="channel", profile=prof,
                         nc_thresholds=(0.0, 0.5), kmnc_k=(5,), tknc_k=(3,), boundary=True)
    growth = {k: [] for k in cov.keys}
    for i, t in enumerate(traces, start=1):
        cov.observe(t)
        if i % 5 == 0:
            for k, pct in cov.percents().items():
                growth[k].append((i, pct))
    results = cov.finalize()
    mres, mgrowth, _ = run_mcdc(traces, model.unit_counts("channel"),
                                variants=("ss", "vv"), profile=prof, vc_ratio=0.1,
                                pair_budget=None, seed=0, checkpoints=(5, 10, 15))
    results.update(mres)
    growth.update(mgrowth)
    comparison = normalized_differences(
        {"test": {"nc@0": 60.0}, "mix": {"nc@0": 75.0}}, "test", ("test", "mix"))
    return ReportBundle(
        model_info={"name": model.name, "input_shape": list(model.input_shape)},
        config={"seed": 0},
        granularity="channel",
        results=results,
        stats={k: summarize(r) for k, r in results.items()},
        growth={k: GrowthCurve(k, tuple(v)) for k, v in growth.items()},
        profile_info={"granularity": "channel", "training_count": 60},
        accuracy=25.0,
        comparison=comparison,
        timings={"coverage_total": 0.5, "profile": 1.25},
        warnings=["sample warning"],
    )


def test_heat_color_anchors():
    assert heat_color(0, 10) == "#FFFFFF"
    assert heat_color(10, 10) == "#FF0000"
    assert heat_color(5, 10) == "#FF8080"
    assert heat_color(3, 0) == "#FFFFFF"
    # formula pins rounding: gb = int(255 * (1 - ratio) + 0.5)
    assert heat_color(1, 3) == f"#FF{int(255 * (1 - 1 / 3) + 0.5):02X}" * 1 + f"{int(255 * (1 - 1 / 3) + 0.5):02X}"


def test_report_dict_shape(bundle):
    doc = report_dict(bundle)
    assert doc["schema_version"] == 1
    keys = [c["key"] for c in doc["criteria"]]
    assert keys == sorted(keys)
    one = doc["criteria"][0]
    assert {"key", "family", "params", "total_obligations", "covered", "percent",
            "hit_count_stats"} <= set(one)
    assert "timings" not in doc  # timings live in their own file
    assert doc["accuracy"] == 25.0
    assert doc["warnings"] == ["sample warning"]
    growth = doc["growth"]
    assert isinstance(growth, dict)
    some = growth["nc@0"]
    assert all(len(p) == 2 for p in some)


def test_report_json_bytes_stable(bundle, tmp_path):
    paths1 = emit_reports(bundle, tmp_path / "a")
    paths2 = emit_reports(bundle, tmp_path / "b")
    assert paths1["report.json"].read_bytes() == paths2["report.json"].read_bytes()
    doc = json.loads(paths1["report.json"].read_text())
    assert doc["schema_version"] == 1


def test_emitted_files(bundle, tmp_path):
    paths = emit_reports(bundle, tmp_path / "out")
    names = {p.name for p in (tmp_path / "out").iterdir()}
    assert {"report.json", "coverage.csv", "hitcounts.csv", "growth.csv",
            "report.html", "timings.json", "compare.csv", "compare.json"} <= names
    timings = json.loads((tmp_path / "out" / "timings.json").read_text())
    assert timings["profile"] == 1.25


def test_coverage_csv_layout(bundle, tmp_path):
    emit_reports(bundle, tmp_path / "out")
    rows = list(csv.reader(io.StringIO((tmp_path / "out" / "coverage.csv").read_text())))
    assert rows[0] == ["criterion", "total", "covered", "percent"]
    keys = [r[0] for r in rows[1:]]
    assert keys == sorted(keys)
    by_key = {r[0]: r for r in rows[1:]}
    nc = by_key["nc@0"]
    assert int(nc[1]) == 24
    assert float(nc[3]) == pytest.approx(100.0 * int(nc[2]) / int(nc[1]))


def test_hitcounts_csv_layout(bundle, tmp_path):
    emit_reports(bundle, tmp_path / "out")
    rows = list(csv.reader(io.StringIO((tmp_path / "out" / "hitcounts.csv").read_text())))
    assert rows[0] == ["criterion", "layer", "unit", "section", "hit_count"]
    crits = {r[0] for r in rows[1:]}
    assert {"nc@0", "kmnc@5", "nbc_lower", "nbc_upper", "snac", "mcdc_ss"} <= crits
    kmnc_rows = [r for r in rows[1:] if r[0] == "kmnc@5"]
    assert len(kmnc_rows) == 24 * 5
    nbc_rows = [r for r in rows[1:] if r[0].startswith("nbc_")]
    assert len(nbc_rows) == 2 * 24
    # mcdc rows use layer=pair index, unit=condition, section=decision
    mc = [r for r in rows[1:] if r[0] == "mcdc_ss"]
    assert len(mc) == 6 * 8 + 8 * 10


def test_growth_csv_layout(bundle, tmp_path):
    emit_reports(bundle, tmp_path / "out")
    rows = list(csv.reader(io.StringIO((tmp_path / "out" / "growth.csv").read_text())))
    assert rows[0] == ["criterion", "tests_seen", "percent"]
    for r in rows[1:]:
        assert float(r[2]) >= 0.0


def test_compare_csv_layout(bundle, tmp_path):
    emit_reports(bundle, tmp_path / "out")
    rows = list(csv.reader(io.StringIO((tmp_path / "out" / "compare.csv").read_text())))
    assert rows[0] == ["dataset", "criterion", "coverage", "delta", "ncoverage"]
    base = [r for r in rows[1:] if r[0] == "test"]
    assert all(float(r[4]) == 0.0 for r in base)


def test_html_unit_cells(bundle, tmp_path):
    html = render_html(bundle)
    assert html.count('unit-cell') >= 24
    # exactly one cell per unit for the unit map criterion
    import re
    cells = re.findall(r'class="unit-cell[^"]*"', html)
    assert len(cells) == 24
    assert "degree-cell" in html
    assert "<svg" in html
    assert "sample warning" in html
    assert "never covered" in html.lower() or "uncovered" in html


def test_html_heat_scale(bundle):
    html = render_html(bundle)
    assert "#FF0000" in html or "#FF8080" in html or "#FF" in html


def test_html_without_optional_blocks(bundle):
    lean = ReportBundle(
        model_info=bundle.model_info, config=bundle.config, granularity="channel",
        results=bundle.results, stats=bundle.stats,
    )
    html = render_html(lean)
    assert "unit-cell" in html
    doc = report_dict(lean)
    # schema keeps a stable key set; absent blocks are null
    assert doc["comparison"] is None
    assert doc["accuracy"] is None


def test_mcdc_pair_table_cap():
    # fabricate one result with more covered pairs than the display cap
    hits = [np.zeros((30, 30), dtype=np.int64)]
    hits[0][:25, :25] = 1  # 625 covered pairs
    res = CoverageResult(key="mcdc_ss", family="mcdc", params={"variant": "ss"},
                         total=900, covered=625, percent=625 / 9.0, unit_counts=(30, 30),
                         hit_counts=hits)
    bundle = ReportBundle(model_info={"name": "m"}, config={}, granularity="neuron",
                          results={"mcdc_ss": res}, stats={"mcdc_ss": summarize(res)})
    html = render_html(bundle)
    import re
    pair_rows = re.findall(r'class="pair-row"', html)
    assert len(pair_rows) == 500
    assert "500 of 625" in html
