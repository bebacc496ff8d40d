import math

import pytest
import yaml

from securestate.schemas.report import AuditReport, AuditRunReport, GuaranteeEntry
from securestate.services.report_writer import flatten, format_float, format_scalar, render_human, render_machine, write_report


class TestFormatFloat:
    @pytest.mark.parametrize(
        "value, expected",
        [
            (25.2, "25.2"),
            (3.0, "3.0"),
            (1e-06, "1.0e-06"),
            (-5962.39, "-5962.39"),
            (-0.0, "0.0"),
            (1.0 / 3.0, "0.333333333333"),
            (2.5e20, "2.5e+20"),
            (math.inf, ".inf"),
            (-math.inf, "-.inf"),
            (math.nan, ".nan"),
        ],
    )
    def test_values(self, value, expected):
        assert format_float(value) == expected

    @pytest.mark.parametrize("value", [25.2, 1e-06, -5962.39, 1.0 / 3.0, 2.5e20, math.inf])
    def test_yaml_reads_a_float(self, value):
        parsed = yaml.safe_load(format_float(value))
        assert isinstance(parsed, float)
        assert parsed == pytest.approx(value, rel=1e-11)

    def test_digits_override(self):
        assert format_float(math.pi, digits=3) == "3.14"


class TestFormatScalar:
    def test_scalars(self):
        assert format_scalar(None) == "null"
        assert format_scalar(True) == "true"
        assert format_scalar(7) == "7"
        assert format_scalar("unique") == '"unique"'

    def test_nested_lists(self):
        assert format_scalar([[1.0, 2], [3.5]]) == "[[1.0, 2], [3.5]]"


class TestFlatten:
    def test_dotted_keys(self):
        data = {"audit": {"s_max": 2, "lower_bounds": {0: 1, 1: 2}}, "state": [1.0, 2.0]}
        assert list(flatten(data)) == [
            ("audit.s_max", 2),
            ("audit.lower_bounds.0", 1),
            ("audit.lower_bounds.1", 2),
            ("state", [1.0, 2.0]),
        ]

    def test_lists_of_mappings_are_indexed(self):
        data = {"methods": [{"outcome": "unique"}, {"outcome": "ambiguous"}]}
        assert list(flatten(data)) == [("methods.0.outcome", "unique"), ("methods.1.outcome", "ambiguous")]

    def test_empty_mapping(self):
        assert list(flatten({"timings": {}})) == [("timings", [])]


@pytest.fixture
def audit_run():
    return AuditRunReport(
        scenario="example",
        audit=AuditReport(
            n=2,
            p=0,
            q=3,
            s_max=2,
            lower_bounds={0: 1, 1: 1, 2: 2},
            guarantee_table=[GuaranteeEntry(s=1, tau=1, sparse_observable=True, guarantee=True, lower_bound=2)],
        ),
        timings={"audit": 0.25},
        resolved_config={"name": "example", "x0": [2.0, 1.0]},
    )


class TestRender:
    def test_machine_report_parses(self, audit_run):
        data = yaml.safe_load(render_machine(audit_run))
        assert data["scenario"] == "example"
        assert data["audit.s_max"] == 2
        assert data["audit.lower_bounds.2"] == 2
        assert data["audit.guarantee_table.0.guarantee"] is True
        assert data["resolved_config"] == {"name": "example", "x0": [2.0, 1.0]}

    def test_machine_report_leaves_out_timings(self, audit_run):
        assert "timings" not in render_machine(audit_run)

    def test_machine_report_is_stable(self, audit_run):
        assert render_machine(audit_run) == render_machine(audit_run.model_copy(update={"timings": {"audit": 9.0}}))

    def test_human_report(self, audit_run):
        text = render_human(audit_run)
        assert "example" in text
        assert "s_max" in text

    def test_write_to_file(self, audit_run, tmp_path):
        out = tmp_path / "reports" / "audit.yaml"
        text = write_report(audit_run, "machine", out)
        assert out.read_text(encoding="utf-8") == text
