import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ttoi.linalg import NumericError
from ttoi.markov import (
    MarkovModel,
    Trajectory,
    aggregatable_cores,
    empirical_from_trajectory,
    empirical_generative,
    estimate_transition,
    generate_aggregatable,
    sample_trajectory,
    simplex_project,
    transition_counts,
)
from ttoi.rng import generator
from ttoi.tensor_core import DenseTensor
from ttoi.tt import tt_ranks_of

from oracles import simplex_active_set, transition_count_loop


def _fibers(t):
    return t.data.reshape(-1, t.dims[-1], order="F")


def _cycle(p):
    """First-order chain that always moves ``i -> i + 1 mod p``."""
    m = np.zeros((p, p))
    m[np.arange(p), (np.arange(p) + 1) % p] = 1.0
    return MarkovModel(p, 1, DenseTensor.from_array(m))


class TestModel:
    def test_fibers_are_stochastic(self):
        m = generate_aggregatable(5, 3, (2, 2), seed=0)
        rows = _fibers(m.transition)
        assert np.all(rows >= 0)
        np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-12)

    def test_low_rank(self):
        m = generate_aggregatable(5, 3, (2, 2), seed=1)
        assert all(r <= 2 for r in tt_ranks_of(m.transition))

    def test_rank_one_is_product_form(self):
        # every fiber is the same distribution, independent of the prefix
        m = generate_aggregatable(2, 4, (1, 1, 1), seed=23)
        rows = _fibers(m.transition)
        np.testing.assert_allclose(rows, np.broadcast_to(rows[0], rows.shape), atol=1e-15)
        np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-12)

    def test_cores_are_stochastic(self):
        cores = aggregatable_cores(4, 4, (2, 3, 2), seed=2)
        np.testing.assert_allclose(cores.core_first.sum(axis=1), 1.0)
        for g in cores.cores_mid:
            np.testing.assert_allclose(g.sum(axis=2), 1.0)
        np.testing.assert_allclose(cores.core_last.sum(axis=0), 1.0)

    def test_seeded(self):
        a = generate_aggregatable(4, 3, (2, 2), seed=3)
        b = generate_aggregatable(4, 3, (2, 2), seed=3)
        c = generate_aggregatable(4, 3, (2, 2), seed=4)
        assert a.transition == b.transition
        assert a.transition != c.transition

    def test_rejects_bad_fibers(self):
        t = DenseTensor.from_array(np.full((2, 2), 0.4))
        with pytest.raises(ValueError):
            MarkovModel(2, 1, t)
        with pytest.raises(ValueError):
            MarkovModel(2, 1, DenseTensor.from_array(np.array([[1.5, -0.5], [0.5, 0.5]])))
        with pytest.raises(ValueError):
            MarkovModel(3, 1, DenseTensor.from_array(np.eye(2)))

    @pytest.mark.parametrize("ranks", [(2,), (0, 1), (2, 2, 2)])
    def test_bad_ranks(self, ranks):
        with pytest.raises(ValueError):
            aggregatable_cores(3, 3, ranks, 0)


class TestTrajectory:
    def test_labels_round_trip(self):
        t = Trajectory.from_labels([1, 3, 2], 3)
        np.testing.assert_array_equal(t.states, [0, 2, 1])
        np.testing.assert_array_equal(t.labels(), [1, 3, 2])

    @pytest.mark.parametrize("labels", [[0, 1], [1, 4]])
    def test_label_range(self, labels):
        with pytest.raises(ValueError):
            Trajectory.from_labels(labels, 3)

    def test_forced_path(self):
        traj = sample_trajectory(_cycle(4), 12, seed=5)
        s = traj.states
        np.testing.assert_array_equal(s[1:], (s[:-1] + 1) % 4)

    def test_forced_path_second_order(self):
        # next state = previous + current mod p
        p = 3
        arr = np.zeros((p, p, p))
        for i, j in itertools.product(range(p), repeat=2):
            arr[i, j, (i + j) % p] = 1.0
        m = MarkovModel(p, 2, DenseTensor.from_array(arr))
        s = sample_trajectory(m, 30, seed=6).states
        np.testing.assert_array_equal(s[2:], (s[:-2] + s[1:-1]) % p)

    def test_seeded(self):
        m = generate_aggregatable(3, 3, (2, 2), seed=7)
        a = sample_trajectory(m, 200, seed=8).states
        np.testing.assert_array_equal(a, sample_trajectory(m, 200, seed=8).states)
        assert not np.array_equal(a, sample_trajectory(m, 200, seed=9).states)

    def test_too_short(self):
        with pytest.raises(ValueError):
            sample_trajectory(generate_aggregatable(3, 3, (1, 1), 0), 1, seed=0)

    def test_transition_frequencies(self):
        q = np.array([[0.1, 0.6, 0.3], [0.5, 0.25, 0.25], [0.2, 0.2, 0.6]])
        m = MarkovModel(3, 1, DenseTensor.from_array(q))
        counts = transition_counts(sample_trajectory(m, 10**6, seed=10), 2)
        n_i = counts.sum(axis=1, keepdims=True)
        sigma = np.sqrt(q * (1 - q) / n_i)
        assert np.all(np.abs(counts / n_i - q) <= 3 * sigma)


class TestEmpirical:
    @pytest.mark.parametrize("p,d", [(2, 2), (3, 3), (2, 4)])
    def test_against_counting_oracle(self, p, d):
        states = np.random.default_rng(11).integers(0, p, size=60)
        got = empirical_from_trajectory(Trajectory(states, p), p, d)
        np.testing.assert_allclose(got.to_array(), transition_count_loop(states, p, d), rtol=1e-15)

    def test_hand_counted(self):
        # windows: (1,2) (2,1) (1,2) (2,2) in 1-based labels
        traj = Trajectory.from_labels([1, 2, 1, 2, 2], 3)
        got = empirical_from_trajectory(traj, 3, 2).to_array()
        np.testing.assert_allclose(got[0], [0.0, 1.0, 0.0])
        np.testing.assert_allclose(got[1], [0.5, 0.5, 0.0])
        np.testing.assert_allclose(got[2], [1 / 3] * 3)

    def test_constant_trajectory(self):
        got = empirical_from_trajectory(Trajectory(np.zeros(50, dtype=int), 3), 3, 3).to_array()
        np.testing.assert_array_equal(got[0, 0], [1.0, 0.0, 0.0])
        rest = got.reshape(9, 3)[1:]
        np.testing.assert_allclose(rest, 1 / 3)

    def test_shorter_than_window(self):
        got = empirical_from_trajectory(Trajectory(np.array([0, 1]), 2), 2, 3)
        np.testing.assert_allclose(got.data, 0.5)

    def test_generative_concentrates(self):
        m = generate_aggregatable(4, 3, (2, 2), seed=12)
        err = np.abs(empirical_generative(m, 10**5, seed=13).data - m.transition.data).max()
        assert err <= 0.02

    def test_generative_point_masses(self):
        m = _cycle(5)
        np.testing.assert_array_equal(empirical_generative(m, 7, seed=14).data, m.transition.data)

    def test_generative_mse(self):
        m = generate_aggregatable(3, 3, (2, 2), seed=15)
        q = m.transition.data
        n = 500
        expect = np.sum(q * (1 - q)) / n
        mse = np.mean([np.sum((empirical_generative(m, n, seed=s).data - q) ** 2) for s in range(50)])
        assert mse == pytest.approx(expect, rel=0.2)


class TestSimplexProject:
    def test_against_active_set(self):
        v = np.array([0.2, 0.4, 0.9])
        np.testing.assert_allclose(simplex_project(v), simplex_active_set(v), atol=1e-15)
        np.testing.assert_allclose(simplex_project(v), [1 / 30, 7 / 30, 11 / 15], atol=1e-15)

    def test_clips_to_vertex(self):
        np.testing.assert_array_equal(simplex_project([2.0, 0.0]), [1.0, 0.0])

    def test_row_wise(self):
        v = np.array([[0.2, 0.4, 0.9], [2.0, 0.0, -1.0]])
        np.testing.assert_allclose(simplex_project(v), [simplex_active_set(r) for r in v], atol=1e-15)

    def test_non_finite(self):
        with pytest.raises(NumericError):
            simplex_project([0.5, np.nan])

    def test_empty(self):
        with pytest.raises(ValueError):
            simplex_project([])

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=6))
    def test_properties(self, v):
        x = simplex_project(v)
        assert np.all(x >= 0)
        assert abs(x.sum() - 1.0) <= 1e-12
        np.testing.assert_allclose(simplex_project(x), x, atol=1e-12)
        np.testing.assert_allclose(x, simplex_active_set(v), atol=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.floats(-3, 3), min_size=4, max_size=4),
        st.lists(st.floats(-3, 3), min_size=4, max_size=4),
    )
    def test_nonexpansive(self, a, b):
        a, b = np.array(a), np.array(b)
        gap = np.linalg.norm(simplex_project(a) - simplex_project(b))
        assert gap <= np.linalg.norm(a - b) + 1e-12


class TestEstimateTransition:
    def test_fixed_point(self):
        m = generate_aggregatable(4, 3, (2, 2), seed=16)
        est = estimate_transition(m.transition, (2, 2))
        np.testing.assert_allclose(est.data, m.transition.data, atol=1e-10)

    def test_output_is_stochastic(self):
        m = generate_aggregatable(4, 3, (2, 2), seed=17)
        emp = empirical_generative(m, 50, seed=18)
        est, smooth = estimate_transition(emp, (2, 2), full_output=True)
        rows = _fibers(est)
        assert np.all(rows >= 0)
        np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-12)
        assert smooth.dims == est.dims

    def test_more_data_helps(self):
        errs = {10**4: [], 10**5: []}
        for rep in range(10):
            m = generate_aggregatable(5, 3, (2, 2), seed=generator(19, rep))
            for n in errs:
                emp = empirical_generative(m, n, seed=generator(20, rep, n))
                errs[n].append(np.linalg.norm(estimate_transition(emp, (2, 2)).data - m.transition.data))
        assert np.median(errs[10**5]) < np.median(errs[10**4])

    def test_more_trajectory_helps(self):
        errs = {10**4: [], 10**5: []}
        for rep in range(10):
            m = generate_aggregatable(5, 3, (2, 2), seed=generator(21, rep))
            for n in errs:
                traj = sample_trajectory(m, n, seed=generator(22, rep, n))
                est = estimate_transition(empirical_from_trajectory(traj, 5, 3), (2, 2))
                errs[n].append(np.linalg.norm(est.data - m.transition.data))
        assert np.median(errs[10**5]) < np.median(errs[10**4])

    def test_non_cubical(self):
        with pytest.raises(ValueError):
            estimate_transition(DenseTensor.zeros((3, 4)), (1,))
