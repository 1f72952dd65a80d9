import json
from pathlib import Path

import numpy as np
import pytest

from varfolio import InstanceFile, InvalidInputError, ProblemSpec, ScenarioSet, mu0_grid
from varfolio.io import (
    ComparisonRecord,
    GapSummaryRecord,
    ParseError,
    emit_results,
    parse_ff_daily,
)

FIXTURE = Path(__file__).parent / "data" / "daily_returns_fixture.txt"


class TestParseDaily:
    def test_fixture_shape_and_drops(self):
        data = parse_ff_daily(FIXTURE)
        assert data.scenarios.n_scenarios == 6
        assert data.scenarios.n_assets == 4
        assert data.dropped_dates == ("19900102", "19900106")
        assert data.scenarios.asset_labels == ("PA", "PB", "PC", "PD")
        assert data.scenarios.returns[0, 0] == 0.11

    def test_mu_recomputed_from_kept_rows(self):
        data = parse_ff_daily(FIXTURE)
        assert np.allclose(data.scenarios.mu, data.scenarios.returns.mean(axis=0))

    def test_column_selection_changes_drops(self):
        # without the PD column the 19900106 row has no sentinel left
        data = parse_ff_daily(FIXTURE, assets=["PA", "PB"])
        assert data.scenarios.n_scenarios == 8
        assert data.dropped_dates == ()
        assert data.scenarios.asset_labels == ("PA", "PB")

    def test_row_range_applies_before_drops(self):
        data = parse_ff_daily(FIXTURE, rows=(0, 3))
        assert data.scenarios.n_scenarios == 2
        assert data.dropped_dates == ("19900102",)

    def test_three_line_fixture(self, tmp_path):
        path = tmp_path / "mini.txt"
        path.write_text(
            "header\n"
            "19800101 0.5 0.25\n"
            "19800102 -99.99 0.1\n"
            "19800103 0.0 0.75\n"
        )
        data = parse_ff_daily(path)
        assert data.scenarios.n_scenarios == 2
        assert len(data.dropped_dates) == 1

    def test_empty_selection_rejected(self):
        with pytest.raises(InvalidInputError):
            parse_ff_daily(FIXTURE, assets=[])
        with pytest.raises(InvalidInputError):
            parse_ff_daily(FIXTURE, rows=(100, 200))

    def test_malformed_row_reports_line_number(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("19800101 0.5 0.25\n19800102 0.1\n")
        with pytest.raises(ParseError, match="line 2"):
            parse_ff_daily(path)

    def test_non_numeric_value_reports_line_number(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("19800101 0.5 0.25\n19800102 oops 0.1\n")
        with pytest.raises(ParseError, match="line 2"):
            parse_ff_daily(path)

    def test_dated_header_line_stays_header(self, tmp_path):
        path = tmp_path / "dated_header.txt"
        path.write_text(
            "20240101 data through this date\n"
            "19800101 0.5 0.25\n"
            "19800102 0.75 0.1\n"
        )
        data = parse_ff_daily(path)
        assert data.scenarios.n_scenarios == 2
        assert data.skipped_lines == 1


class TestMu0Grid:
    def test_round_numbers(self):
        s = ScenarioSet.from_returns(
            np.array([[0.0, 0.7], [0.0, 0.7]]), mu=np.array([0.0, 0.7])
        )
        assert mu0_grid(s, 6) == pytest.approx([0.1, 0.2, 0.3, 0.4, 0.5, 0.6])

    def test_degenerate_spread(self):
        s = ScenarioSet.from_returns(np.full((3, 2), 0.3))
        assert mu0_grid(s, 4) == pytest.approx([0.3, 0.3, 0.3, 0.3])

    def test_single_point_is_midpoint(self):
        s = ScenarioSet.from_returns(np.array([[0.0, 1.0], [0.0, 1.0]]))
        assert mu0_grid(s, 1) == pytest.approx([0.5])

    def test_strictly_increasing_interior(self):
        rng = np.random.default_rng(71)
        s = ScenarioSet.from_returns(rng.uniform(-3, 3, size=(10, 5)))
        grid = mu0_grid(s, 6)
        lo, hi = float(s.mu.min()), float(s.mu.max())
        assert all(b > a for a, b in zip(grid, grid[1:]))
        assert all(lo < g < hi for g in grid)


class TestInstanceFile:
    def test_round_trip_byte_identical(self, toy, toy_spec):
        inst = InstanceFile.inline(toy, toy_spec, seed=7)
        text = inst.to_json()
        again = InstanceFile.from_json(text)
        assert again.to_json() == text
        scenarios, spec = again.load()
        assert np.array_equal(scenarios.returns, toy.returns)
        assert np.array_equal(scenarios.mu, toy.mu)
        assert spec.alpha == toy_spec.alpha and spec.mu0 == toy_spec.mu0

    def test_daily_file_source(self, tmp_path, toy_spec):
        inst = InstanceFile(
            alpha=0.25,
            mu0=0.1,
            source={"kind": "ff_daily", "path": str(FIXTURE), "assets": [0, 1], "rows": [0, 8]},
        )
        path = tmp_path / "inst.json"
        inst.write(path)
        scenarios, spec = InstanceFile.read(path).load()
        assert scenarios.n_assets == 2
        assert scenarios.n_scenarios == 8
        assert spec.alpha == 0.25

    def test_unknown_source_rejected(self):
        inst = InstanceFile(alpha=0.1, mu0=0.0, source={"kind": "carrier-pigeon"})
        with pytest.raises(InvalidInputError):
            inst.load()


class TestEmitResults:
    def test_comparison_row_ratio(self):
        rec = ComparisonRecord(
            n=30, m=1000, mu0=0.058,
            var_exact=-2.554, t_exact=2.2,
            var_certified=-2.560, t_certified=1.78,
        )
        text = emit_results([rec], format="csv")
        lines = text.strip().splitlines()
        assert lines[0].startswith("n,m,mu0,")
        assert lines[1].split(",")[-1] == "1.2"
        assert "-2.554" in lines[1] and "-2.56" in lines[1]
        assert lines[-1].startswith("average_speed_up")

    def test_timeout_cells_rendered_as_stars(self):
        rec = ComparisonRecord(
            n=50, m=3500, mu0=0.046,
            var_exact=None, t_exact=None,
            var_certified=-1.849, t_certified=2003.1,
        )
        text = emit_results([rec], format="csv")
        row = text.strip().splitlines()[1].split(",")
        assert row[3] == "*" and row[4] == "*"
        assert row[-1] == "★"

    def test_empty_records_header_only(self):
        text = emit_results([], format="csv")
        assert text.strip().splitlines() == ["n,m,mu0,var_exact,t_exact,var_certified,t_certified,speedup"]

    def test_json_shape(self):
        rec = ComparisonRecord(
            n=2, m=5, mu0=0.5,
            var_exact=0.5, t_exact=0.5,
            var_certified=0.5, t_certified=0.25,
        )
        payload = json.loads(emit_results([rec], format="json"))
        assert payload["rows"][0]["speedup"] == pytest.approx(2.0)
        assert payload["average_speed_up"] == pytest.approx(2.0)

    def test_gap_summary_shape(self):
        rec = GapSummaryRecord(
            n=30, m=1000, mu0_min=0.019, mu0_max=0.058,
            cert_gap_pct=0.04, cert_time_ratio=1.1,
            cvar_gap_pct=1.23, cvar_time_ratio=1.4,
        )
        text = emit_results([rec], format="csv", shape="gap")
        lines = text.strip().splitlines()
        assert lines[0].split(",")[:4] == ["n", "m", "mu0_min", "mu0_max"]
        assert "0.0400" in lines[1]

    def test_write_to_path(self, tmp_path):
        out = tmp_path / "rows.csv"
        emit_results([], format="csv", path=out)
        assert out.read_text().startswith("n,m,mu0")
