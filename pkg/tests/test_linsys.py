import math

import numpy as np
import pytest

from securestate.errors import DimensionError
from securestate.services.linsys import (
    AttackScenario,
    LinearSystem,
    Measurements,
    constant_inputs,
    inject_attack,
    inputs_from_callable,
    simulate,
)


class TestLinearSystem:
    def test_dimensions(self, double_integrator, fourdim):
        assert (double_integrator.n, double_integrator.p, double_integrator.q) == (2, 0, 3)
        assert (fourdim.n, fourdim.p, fourdim.q) == (4, 1, 6)

    def test_non_square_A_rejected(self):
        with pytest.raises(DimensionError):
            LinearSystem.from_matrices(A=[[1, 0, 0], [0, 1, 0]], C=[[1, 0, 0]])

    def test_C_width_must_match_n(self):
        with pytest.raises(DimensionError):
            LinearSystem.from_matrices(A=[[1, 1], [0, 1]], C=[[1, 0, 0]])

    def test_B_rows_must_match_n(self):
        with pytest.raises(DimensionError):
            LinearSystem.from_matrices(A=[[1, 1], [0, 1]], C=[[1, 0]], B=[[1], [1], [1]])

    def test_non_finite_entries_rejected(self):
        with pytest.raises(DimensionError):
            LinearSystem.from_matrices(A=[[float("nan")]], C=[[1]])

    def test_matrices_are_read_only(self, double_integrator):
        with pytest.raises(ValueError):
            double_integrator.A[0, 0] = 5.0


class TestSimulate:
    def test_clean_outputs(self, double_integrator):
        trajectory = simulate(double_integrator, [2, 1], None, None, 1)
        np.testing.assert_allclose(trajectory.states, [[2, 1], [3, 1]])
        np.testing.assert_allclose(trajectory.measured_outputs, [[4, 2, 3], [5, 3, 4]])
        assert trajectory.K == 1

    def test_zero_state_zero_input_stays_zero(self, fourdim):
        trajectory = simulate(fourdim, np.zeros(4), constant_inputs(0.0, 6), None, 6)
        assert not np.any(trajectory.states)
        assert not np.any(trajectory.measured_outputs)

    def test_inject_attack(self):
        attack = AttackScenario.from_table((1, 3), {(0, 1): 2.0, (0, 3): 1.0})
        np.testing.assert_allclose(inject_attack(np.array([4.0, 2.0, 3.0]), attack, 0), [6, 2, 4])

    def test_expression_attack_first_step(self, fourdim, fourdim_attack):
        trajectory = simulate(fourdim, [25.2, -16.2, 123.3, 4.9], constant_inputs(3.6, 1), fourdim_attack, 1)
        expected = [2000, 0, 3000, 1500 * math.sin(1), 0, 3000 * math.cos(3)]
        np.testing.assert_allclose(trajectory.attacks[0], expected, atol=1e-9)

    def test_attack_support_stays_in_gamma(self, fourdim_case1):
        attacks = fourdim_case1.attacks
        assert not np.any(attacks[:, [1, 4]])
        assert np.all(attacks[:, 0] != 0)

    def test_gamma_outside_sensor_range(self, double_integrator):
        attack = AttackScenario.from_table((4,), {})
        with pytest.raises(DimensionError):
            simulate(double_integrator, [0, 0], None, attack, 1)

    def test_wrong_x0_length(self, double_integrator):
        with pytest.raises(DimensionError):
            simulate(double_integrator, [1, 2, 3], None, None, 1)

    def test_missing_inputs(self, fourdim):
        with pytest.raises(DimensionError):
            simulate(fourdim, np.zeros(4), None, None, 2)

    def test_short_input_sequence(self, fourdim):
        with pytest.raises(DimensionError):
            simulate(fourdim, np.zeros(4), constant_inputs(1.0, 2), None, 3)

    def test_superposition(self, fourdim):
        rng = np.random.default_rng(7)
        x_a, x_b = rng.normal(size=4), rng.normal(size=4)
        u_a, u_b = rng.normal(size=(5, 1)), rng.normal(size=(5, 1))
        alpha, beta = 0.7, -1.3
        combined = simulate(fourdim, alpha * x_a + beta * x_b, alpha * u_a + beta * u_b, None, 5)
        first = simulate(fourdim, x_a, u_a, None, 5)
        second = simulate(fourdim, x_b, u_b, None, 5)
        np.testing.assert_allclose(
            combined.measured_outputs,
            alpha * first.measured_outputs + beta * second.measured_outputs,
            rtol=1e-9,
            atol=1e-9,
        )

    def test_deterministic(self, fourdim, fourdim_attack):
        first = simulate(fourdim, [1, 2, 3, 4], constant_inputs(3.6, 4), fourdim_attack, 4)
        second = simulate(fourdim, [1, 2, 3, 4], constant_inputs(3.6, 4), fourdim_attack, 4)
        assert np.array_equal(first.measured_outputs, second.measured_outputs)
        assert np.array_equal(first.states, second.states)


class TestAttackScenario:
    def test_gamma_is_sorted(self):
        assert AttackScenario(gamma=(3, 1)).gamma == (1, 3)

    def test_duplicates_rejected(self):
        with pytest.raises(DimensionError):
            AttackScenario(gamma=(1, 1))

    def test_zero_based_index_rejected(self):
        with pytest.raises(DimensionError):
            AttackScenario(gamma=(0, 2))

    def test_table_entry_outside_gamma(self):
        with pytest.raises(DimensionError):
            AttackScenario.from_table((1,), {(0, 2): 1.0})

    def test_vector_is_zero_off_support(self):
        attack = AttackScenario(gamma=(2,), signal=lambda k, i: 10.0 + k)
        np.testing.assert_allclose(attack.vector(3, 4), [0, 13, 0, 0])


def test_measurements_for_autonomous_system():
    meas = Measurements(outputs=[[1.0, 2.0], [3.0, 4.0]], inputs=[])
    assert meas.last_step == 1
    assert meas.inputs.shape == (1, 0)
    assert meas.input_at(0, 0).shape == (0,)


def test_inputs_from_callable():
    U = inputs_from_callable(lambda k: [k, 2 * k], 3, 2)
    np.testing.assert_allclose(U, [[0, 0], [1, 2], [2, 4]])
