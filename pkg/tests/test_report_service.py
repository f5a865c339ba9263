"""
報表彙整與輸出檔案測試
"""
import json
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pandas as pd
import pytest

from lattice_regression.services.blaar import GameTrace
from lattice_regression.services.bound_verifier import REPORT_COLUMNS, BoundReport, BoundRow
from lattice_regression.services.perceptron import SopTrace
from lattice_regression.services.report_service import (LOSS_COLUMNS, SUMMARY_COLUMNS, ReportAggregator,
                                                        loss_frame, sop_trace_dict)


@pytest.fixture
def aggregator(tmp_path):
    return ReportAggregator(tmp_path / "out")


@pytest.fixture
def trace():
    return GameTrace.from_predictions([0.0, 0.5, -0.25], [1.0, 0.5, 0.25], a=1.0, n=2, solver_residual=1e-12,
                                      config={"Y": 1.0}, exponent=2.0)


@pytest.fixture
def sop_trace():
    return SopTrace(predictions=np.array([1, 1, -1, 1]), labels=np.array([1, -1, -1, -1]), mistakes=(1, 3), a=1.0)


def _report(selector="eq1"):
    return BoundReport(selector, [BoundRow.evaluate("zero", 1.25, 1.5, 0.5), BoundRow.evaluate("f", 1.25, 0.0, 2.0)])


class TestLossFrame:
    def test_regression_trace(self, trace):
        frame = loss_frame(trace)
        assert list(frame.columns) == LOSS_COLUMNS
        assert frame["step"].tolist() == [1, 2, 3]
        np.testing.assert_allclose(frame["step_loss"], [1.0, 0.0, 0.25])
        np.testing.assert_allclose(frame["cumulative_loss"], trace.losses)

    def test_perceptron_trace_counts_mistakes(self, sop_trace):
        frame = loss_frame(sop_trace)
        assert frame["step_loss"].tolist() == [0.0, 1.0, 0.0, 1.0]
        assert frame["cumulative_loss"].iloc[-1] == 2

    def test_sop_trace_dict(self, sop_trace):
        payload = sop_trace_dict(sop_trace, {"mode": "perceptron"}, 3)
        assert payload["mistakes"] == [1, 3]
        assert payload["n"] == 3


class TestWriters:
    def test_json_is_sorted_with_trailing_newline(self, aggregator):
        path = aggregator.write_json({"b": 1, "a": [1, 2]}, "nested/trace.json")
        text = path.read_text(encoding="utf-8")
        assert text.endswith("}\n")
        assert text.index('"a"') < text.index('"b"')
        assert json.loads(text) == {"a": [1, 2], "b": 1}

    def test_csv_uses_unix_line_endings(self, aggregator, trace):
        path = aggregator.write_losses(trace, "losses.csv")
        raw = path.read_bytes()
        assert b"\r\n" not in raw
        assert raw.decode("utf-8").splitlines()[0] == ",".join(LOSS_COLUMNS)

    def test_write_trace_for_both_kinds(self, aggregator, trace, sop_trace):
        regression = json.loads(aggregator.write_trace(trace, "trace.json").read_text(encoding="utf-8"))
        assert regression["losses"] == pytest.approx(trace.losses.tolist())
        classification = json.loads(
            aggregator.write_trace(sop_trace, "sop.json", config={"a": 1}, n=2).read_text(encoding="utf-8"))
        assert classification["labels"] == [1, -1, -1, -1]

    def test_report_naming(self, aggregator):
        paths = aggregator.write_reports([_report("eq1"), _report("kernel"), _report("relaxed")], "run/report.csv")
        assert [p.name for p in paths] == ["report.csv", "report-kernel.csv", "report-relaxed.csv"]
        frame = pd.read_csv(paths[0])
        assert list(frame.columns) == REPORT_COLUMNS
        assert frame["pass"].tolist() == [True, True]


class TestSummary:
    def test_sorted_by_p_T_seed(self, aggregator):
        aggregator.add_record({"run": "b", "p": 3.0, "T": 100, "seed": 2, "extra": 1})
        aggregator.add_record({"run": "a", "p": 3.0, "T": 50, "seed": 9})
        aggregator.add_record({"run": "c", "p": 1.5, "T": 100, "seed": 1})
        frame = aggregator.summary_frame()
        assert frame["run"].tolist() == ["c", "a", "b"]
        assert list(frame.columns) == [c for c in SUMMARY_COLUMNS if c in frame.columns] + ["extra"]

    def test_concurrent_records(self, aggregator):
        records = [{"run": f"r{i:03d}", "p": float(i % 3 + 2), "T": 10, "seed": i} for i in range(200)]
        with ThreadPoolExecutor(max_workers=8) as executor:
            list(executor.map(aggregator.add_record, records))
        frame = aggregator.summary_frame()
        assert len(frame) == 200
        assert frame["run"].is_unique

    def test_written_summary_is_independent_of_insertion_order(self, tmp_path):
        records = [{"run": f"r{i}", "p": 2.0, "T": 10 * (i % 4 + 1), "seed": i} for i in range(12)]
        first, second = ReportAggregator(tmp_path / "one"), ReportAggregator(tmp_path / "two")
        for record in records:
            first.add_record(record)
        for record in reversed(records):
            second.add_record(record)
        assert first.write_summary().read_bytes() == second.write_summary().read_bytes()


class TestPlots:
    def test_loss_and_envelope(self, aggregator, trace):
        losses = aggregator.plot_losses(trace, {"zero": np.array([1.0, 0.25, 0.0625])})
        envelope = aggregator.plot_bound_envelope(trace, _report())
        assert losses.exists() and losses.stat().st_size > 0
        assert envelope.exists() and envelope.stat().st_size > 0

    def test_growth(self, aggregator):
        growth = pd.DataFrame({
            "p": [1.5, 1.5, 3.0, 3.0],
            "T": [25, 50, 25, 50],
            "worst_regret": [2.0, 3.5, 1.0, 1.8],
            "slope": [0.81, 0.81, 0.85, 0.85],
        })
        assert aggregator.plot_growth(growth).exists()
