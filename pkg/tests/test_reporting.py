# ruff: noqa: PLR2004

import json
import math

import pytest

from src.reporting.generator import (
    ReportGenerator,
    fold_logs,
    published_context_table,
    predictions_table,
    table1,
    write_json,
)
from src.utils.models import CasePrediction, FoldPlan, MethodResult, MetricsReport
from tests.conftest import rectangle_sample


@pytest.fixture
def results():
    """Create one complete segmentation result and one partial regression result."""
    samples = [rectangle_sample(i) for i in range(2)]
    sb = MethodResult(
        method="SB",
        chosen_decays={0: 1e-6, 1: 1e-7},
        inner_scores={0: {1e-6: 4.0, 1e-7: math.inf}},
        loss_curves={0: [0.9, 0.5], 1: [0.8, 0.4]},
        predictions=[
            CasePrediction(
                s.case_id, "SB", s.case_id, s.length_mm, s.length_mm, s.mask, 1.0, 0.0
            )
            for s in samples
        ],
        report=MetricsReport("SB", 7.5, 0.93, 2, dice=0.88, hausdorff_mm=13.0),
    )
    de = MethodResult(
        method="DE",
        chosen_decays={0: 1e-8},
        predictions=[CasePrediction(10, "DE", 0, 101.0, 100.0)],
        status="partial",
        error="Training diverged at epoch 3",
    )
    return {"SB": sb, "DE": de}


@pytest.fixture
def plan():
    """Create a two-fold plan matching the results."""
    return FoldPlan(outer=[[0, 10], [1]], inner=[[], []], grouping="case", seed=4)


def test_table1(results):
    """Test the summary table layout and empty cells."""
    table = table1(results)
    assert list(table.index) == ["PLE", "R", "Dice", "HD"]
    assert list(table.columns) == ["SB", "DE"]
    assert table.loc["Dice", "SB"] == 0.88
    assert table["DE"].isna().all()


def test_predictions_table_order(results):
    """Test that predictions are ordered by method then case."""
    df = predictions_table(results)
    assert df["method"].tolist() == ["DE", "SB", "SB"]
    assert df["case_id"].tolist() == [10, 0, 1]


def test_predictions_table_empty():
    """Test the empty predictions table."""
    assert predictions_table({"DE": MethodResult("DE")}).empty


def test_fold_logs(results):
    """Test one log record per method and outer fold."""
    logs = fold_logs(results)
    assert [(r["method"], r["fold"]) for r in logs] == [("SB", 0), ("SB", 1), ("DE", 0)]
    assert logs[0]["loss_curve"] == [0.9, 0.5]
    assert logs[2]["status"] == "partial"


def test_write_json_handles_infinity(tmp_path):
    """Test that non-finite scores are written as strings."""
    path = write_json(tmp_path / "scores.json", {"scores": {1e-6: math.inf}})
    assert json.loads(path.read_text(encoding="utf-8")) == {"scores": {"1e-06": "inf"}}


def test_published_context_table():
    """Test the published figures table, including inter-observer columns."""
    table = published_context_table()
    assert list(table.index) == ["PLE", "R", "Dice", "HD"]
    assert "E1 vs E2" in table.columns
    assert table.loc["PLE", "SB"] == 7.42


def test_generate_html_report(results):
    """Test the HTML report content."""
    html = ReportGenerator().generate_html_report(
        results, {"date": "2026-01-01", "seed": 4}, with_figures=False
    )
    assert "<html" in html
    assert "2026-01-01" in html
    assert "Training diverged at epoch 3" in html
    assert "E1 vs E2" in html


def test_generate_html_report_with_figures(results):
    """Test that figures are embedded when requested."""
    samples = [rectangle_sample(i) for i in range(2)]
    html = ReportGenerator().generate_html_report(results, {}, samples=samples)
    assert "plotly" in html
    assert "Cas 0" in html


def test_write_results(results, plan, tmp_path):
    """Test every result file written for a run."""
    written = ReportGenerator().write_results(
        results, plan, tmp_path, run_config={"seed": 4}
    )
    out = tmp_path / "results"
    kinds = ("table1", "predictions", "fold_plan", "summary", "run_config", "report")
    for kind in kinds:
        assert written[kind].parent == out
        assert written[kind].is_file()
    assert (out / "folds" / "DE_fold0.json").is_file()
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert summary["DE"]["status"] == "partial"
    assert summary["DE"]["report"] is None
    assert summary["SB"]["report"]["dice"] == 0.88
    assert "pdf" not in written
