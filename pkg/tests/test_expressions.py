import math

import pytest
import sympy as sp

from securestate.errors import ConfigError, ExpressionError
from securestate.services.expressions import parse_signal


class TestParseSignal:
    @pytest.mark.parametrize(
        "source, k, expected",
        [
            ("1500*sin(2*k+1)", 0, 1500 * math.sin(1)),
            ("2000 + k/(k+1)", 3, 2000.75),
            ("3000*cos(2*k+3)", 1, 3000 * math.cos(5)),
            ("125 + sqrt(k)", 4, 127.0),
            ("2^3", 0, 8.0),
            ("2**3 - k", 1, 7.0),
            ("-3.5e1", 2, -35.0),
            (".5 * pi", 0, 0.5 * math.pi),
            ("abs(2 - k)", 5, 3.0),
        ],
    )
    def test_values(self, source, k, expected):
        assert parse_signal(source)(k) == pytest.approx(expected, rel=1e-12)

    def test_numbers_are_constant_signals(self):
        signal = parse_signal(3.5)
        assert signal.is_constant
        assert signal(0) == signal(10) == 3.5

    def test_exact_value(self):
        signal = parse_signal("k/(k+1)")
        assert signal.exact(3) == sp.Rational(3, 4)

    def test_depends_on_k(self):
        assert not parse_signal("k + 1").is_constant

    @pytest.mark.parametrize("source", ["__import__('os')", "x + 1", "k.real", "open(k)", "k; 1", "lambda: 1"])
    def test_rejected(self, source):
        with pytest.raises(ExpressionError):
            parse_signal(source, "attack.signals.1")

    def test_error_carries_field(self):
        with pytest.raises(ConfigError) as info:
            parse_signal("y * 2", "input")
        detail = info.value.details[0]
        assert detail["field"] == "input"
        assert detail["value"] == "y * 2"
        assert "'y'" in detail["message"]

    @pytest.mark.parametrize("source", ["", "   ", True])
    def test_empty_or_non_numeric(self, source):
        with pytest.raises(ExpressionError):
            parse_signal(source)

    def test_unbalanced_parentheses(self):
        with pytest.raises(ExpressionError):
            parse_signal("sin(k")


class TestEvaluation:
    @pytest.mark.parametrize("source", ["1/k", "log(k)", "sqrt(k - 1)", "exp(1000*(k+1))"])
    def test_failure_at_first_step(self, source):
        signal = parse_signal(source, "attack.signals.2")
        with pytest.raises(ExpressionError) as info:
            signal(0)
        detail = info.value.details[0]
        assert detail["field"] == "attack.signals.2"
        assert "k=0" in detail["message"]

    def test_defined_away_from_the_pole(self):
        assert parse_signal("1/k")(4) == pytest.approx(0.25)
