import numpy as np
import pytest

from securestate.errors import DimensionError, NotSparseObservableError, WindowError
from securestate.services.combinat import enumerate_subsets
from securestate.services.linsys import LinearSystem, constant_inputs, simulate
from securestate.services.observability import (
    ObservabilityAnalyzer,
    audit_system,
    build_stacked,
    delete_rows,
    is_s_sparse_observable,
    kept_sensors,
    min_r_for_full_rank,
    numerical_rank,
    sparse_observable_lower_bound,
    stack_measurements,
)


class TestDeleteRows:
    def test_middle_row(self):
        C = np.array([[1, 2], [3, 4], [5, 6]])
        np.testing.assert_array_equal(delete_rows(C, [2]), [[1, 2], [5, 6]])

    def test_two_rows(self):
        C = np.array([[1, 2], [3, 4], [5, 6]])
        np.testing.assert_array_equal(delete_rows(C, [1, 3]), [[3, 4]])

    def test_empty_set_is_identity(self):
        C = np.array([[1, 2], [3, 4]])
        np.testing.assert_array_equal(delete_rows(C, []), C)

    def test_out_of_range(self):
        with pytest.raises(DimensionError):
            delete_rows(np.eye(3), [4])

    def test_duplicates(self):
        with pytest.raises(DimensionError):
            delete_rows(np.eye(3), [1, 1])

    def test_kept_sensors(self):
        assert kept_sensors(6, (1, 3, 4, 6)) == (2, 5)

    def test_deletion_commutes_with_products(self, fourdim):
        A2 = fourdim.A @ fourdim.A
        S = (2, 5)
        np.testing.assert_allclose(delete_rows(fourdim.C @ A2, S), delete_rows(fourdim.C, S) @ A2)


class TestStackedOperators:
    def test_example_window(self, double_integrator):
        ops = build_stacked(double_integrator, (1, 3), 2)
        np.testing.assert_allclose(ops.O, [[1, 0], [1, 1]])
        assert ops.D.shape == (2, 0)
        assert ops.kept == (2,)
        assert ops.full_rank

    def test_single_step_window(self, fourdim):
        ops = build_stacked(fourdim, (1, 2), 1)
        np.testing.assert_allclose(ops.O, fourdim.C[2:])
        assert ops.D.shape == (4, 0)

    def test_input_convolution_blocks(self, fourdim):
        ops = build_stacked(fourdim, (), 3)
        CB = fourdim.C @ fourdim.B
        CAB = fourdim.C @ fourdim.A @ fourdim.B
        assert ops.D.shape == (18, 2)
        assert not np.any(ops.D[:6])
        np.testing.assert_allclose(ops.D[6:12, :1], CB)
        assert not np.any(ops.D[6:12, 1:])
        np.testing.assert_allclose(ops.D[12:18, :1], CAB)
        np.testing.assert_allclose(ops.D[12:18, 1:], CB)

    def test_cannot_delete_every_sensor(self, double_integrator):
        with pytest.raises(DimensionError):
            build_stacked(double_integrator, (1, 2, 3), 2)

    def test_window_must_be_positive(self, double_integrator):
        with pytest.raises(WindowError):
            build_stacked(double_integrator, (), 0)

    def test_gram_rank_matches(self, fourdim):
        for index in enumerate_subsets(fourdim.q, 4):
            O = build_stacked(fourdim, index.subset, 2).O
            assert numerical_rank(O.T @ O) == numerical_rank(O) == 4

    def test_exact_zero_column_is_rank_deficient(self, three_inertia):
        # only the first two angles kept: the last velocity enters after three steps
        ops = build_stacked(three_inertia, (3, 4, 5, 6, 7), 3)
        assert not np.any(ops.O[:, 5])
        assert not ops.full_rank
        assert build_stacked(three_inertia, (3, 4, 5, 6, 7), 4).full_rank


class TestSparseObservability:
    def test_min_r(self, double_integrator):
        assert min_r_for_full_rank(double_integrator, (1, 3)) == 2
        assert min_r_for_full_rank(double_integrator, ()) == 1

    def test_unobservable_pair(self):
        system = LinearSystem.from_matrices(A=[[1, 1], [0, 1]], C=[[0, 1]])
        assert min_r_for_full_rank(system, ()) is None

    def test_example_system(self, double_integrator):
        assert is_s_sparse_observable(double_integrator, 2)
        assert sparse_observable_lower_bound(double_integrator, 0) == 1
        assert sparse_observable_lower_bound(double_integrator, 1) == 1
        assert sparse_observable_lower_bound(double_integrator, 2) == 2

    def test_lower_bound_never_exceeds_n(self, fourdim):
        analyzer = ObservabilityAnalyzer(fourdim)
        for s in range(fourdim.q):
            assert 1 <= analyzer.lower_bound(s) <= fourdim.n

    def test_stacked_identity(self):
        system = LinearSystem.from_matrices(A=[[0, 1], [0, 0]], C=np.vstack([np.eye(2)] * 3))
        assert is_s_sparse_observable(system, 2)
        assert not is_s_sparse_observable(system, 3)

    def test_not_observable_raises(self):
        system = LinearSystem.from_matrices(A=[[1, 0], [0, 1]], C=[[1, 0], [1, 0]])
        with pytest.raises(NotSparseObservableError) as info:
            sparse_observable_lower_bound(system, 0)
        assert info.value.subset == ()

    def test_partially_observable_report(self):
        system = LinearSystem.from_matrices(A=[[1, 1], [0, 1]], C=[[1, 0], [0, 0], [0, 0]])
        report = ObservabilityAnalyzer(system).report(1)
        assert not report.observable
        assert report.lower_bound_b is None
        assert report.unobservable == [1]
        assert report.observable_bound == 2

    def test_fully_unobservable_report(self):
        report = ObservabilityAnalyzer(LinearSystem.from_matrices(A=[[1]], C=[[0], [0]])).report(1)
        assert report.unobservable == [1, 2]
        assert report.observable_bound is None


    def test_monotone_in_s(self, fourdim):
        analyzer = ObservabilityAnalyzer(fourdim)
        flags = [analyzer.is_s_sparse_observable(s) for s in range(fourdim.q)]
        assert flags == sorted(flags, reverse=True)

    def test_threaded_report_matches_serial(self, fourdim):
        serial = ObservabilityAnalyzer(fourdim, workers=1).report(3)
        threaded = ObservabilityAnalyzer(fourdim, workers=4).report(3)
        assert serial.per_subset_min_r == threaded.per_subset_min_r
        assert list(threaded.per_subset_min_r) == [index.subset for index in enumerate_subsets(6, 3)]


class TestAudit:
    def test_example_system(self, double_integrator):
        audit = audit_system(double_integrator)
        assert audit.s_max == 2
        assert audit.lower_bounds == {0: 1, 1: 1, 2: 2}
        row = next(r for r in audit.guarantee_table if (r.s, r.tau) == (1, 1))
        assert row.guarantee and row.sparse_observable and row.lower_bound == 2

    def test_tau_max_limits_table(self, fourdim):
        audit = audit_system(fourdim, tau_max=1)
        assert {row.tau for row in audit.guarantee_table} == {1}

    def test_unobservable_system(self):
        system = LinearSystem.from_matrices(A=[[1, 0], [0, 1]], C=[[1, 0], [1, 0]])
        audit = audit_system(system)
        assert audit.s_max is None
        assert audit.lower_bounds == {}
        assert audit.guarantee_table == []


class TestStackMeasurements:
    def test_example_window(self, double_integrator):
        trajectory = simulate(double_integrator, [2, 1], None, None, 1)
        window = stack_measurements(trajectory, (1, 3), 1, 2)
        np.testing.assert_allclose(window.Y, [2, 3])
        assert window.U.shape == (0,)

    def test_attacked_window(self, example3_trajectory):
        window = stack_measurements(example3_trajectory, (1, 2), 1, 2)
        np.testing.assert_allclose(window.Y, [3, 4])

    def test_window_before_start(self, example3_trajectory):
        with pytest.raises(WindowError):
            stack_measurements(example3_trajectory, (), 0, 2)

    def test_window_past_end(self, example3_trajectory):
        with pytest.raises(WindowError):
            stack_measurements(example3_trajectory, (), 2, 1)

    @pytest.mark.parametrize("S", [(), (1, 3), (2, 4, 6), (1, 2, 3, 4, 5)])
    def test_clean_window_is_consistent(self, fourdim, S):
        trajectory = simulate(fourdim, [0.3, -0.2, 0.5, 0.1], constant_inputs(3.6, 5), None, 5)
        r, k = 3, 4
        ops = build_stacked(fourdim, S, r)
        window = stack_measurements(trajectory, S, k, r)
        residual = window.Y - ops.O @ trajectory.states[k - r + 1] - ops.D @ window.U
        assert np.max(np.abs(residual)) <= 1e-9 * max(1.0, np.max(np.abs(window.Y)))
