import numpy as np
import pytest

from zonosmooth.cz import ConstrainedZonotope, contains_point, interval_hull, sample_points
from zonosmooth.errors import InconsistentDataError
from zonosmooth.model import LinearSystem, planar_benchmark, simulate_linear
from zonosmooth.oracle import grid_filter, hull_of_grid
from zonosmooth.smf import measurement_set, predict, run_filter, update

BOX1 = ConstrainedZonotope.from_box([-1.0], [1.0])


def scalar_system(v_half=0.1, Gamma=0.0):
    return LinearSystem(
        Phi=[[1.0]], Gamma=[[Gamma]], Xi=[[1.0]], Psi=[[1.0]],
        w_range=BOX1, v_range=ConstrainedZonotope.from_box([-v_half], [v_half]), x0_range=BOX1,
    )


class TestPredict:
    def test_identity_without_noise(self):
        sys = scalar_system(Gamma=0.0)
        P = ConstrainedZonotope.from_box([-0.3], [0.7])
        box = interval_hull(predict(P, sys, 0))
        np.testing.assert_allclose(box.lower, [-0.3])
        np.testing.assert_allclose(box.upper, [0.7])

    def test_noise_segment_from_origin(self):
        sys = planar_benchmark()
        box = interval_hull(predict(ConstrainedZonotope.point([0.0, 0.0]), sys, 0))
        np.testing.assert_allclose(box.lower, [-0.5, -1.0], atol=1e-12)
        np.testing.assert_allclose(box.upper, [0.5, 1.0], atol=1e-12)

    def test_sampled_successors_are_members(self, rng):
        sys = planar_benchmark()
        traj = simulate_linear(sys, 1, 0)
        P = run_filter(sys, traj)[0].posterior
        prior = predict(P, sys, 0)
        xs = sample_points(P, 200, rng)
        ws = rng.uniform(-1, 1, (200, 1))
        for x, w in zip(xs, ws):
            assert contains_point(prior, sys.Phi @ x + sys.Gamma @ w)


class TestUpdate:
    def test_wide_noise_keeps_prior(self):
        sys = scalar_system(v_half=100.0)
        post = update(BOX1, [0.0], sys, 0)
        box = interval_hull(post)
        np.testing.assert_allclose(box.lower, [-1.0], atol=1e-9)
        np.testing.assert_allclose(box.upper, [1.0], atol=1e-9)

    def test_interval_intersection(self):
        box = interval_hull(update(BOX1, [0.95], scalar_system(0.1), 0))
        np.testing.assert_allclose(box.lower, [0.85], atol=1e-12)
        np.testing.assert_allclose(box.upper, [1.0], atol=1e-12)

    def test_measurement_set(self):
        box = interval_hull(measurement_set([0.95], scalar_system(0.1), 0))
        np.testing.assert_allclose([box.lower[0], box.upper[0]], [0.85, 1.05], atol=1e-12)

    def test_posterior_within_prior(self, rng):
        sys = planar_benchmark()
        f = run_filter(sys, simulate_linear(sys, 3, 1))
        for st in f:
            for p in sample_points(st.posterior, 50, rng):
                assert contains_point(st.prior, p)


class TestRunFilter:
    def test_exact_measurements_pin_the_state(self):
        sys = LinearSystem([[1.0]], [[0.0]], [[1.0]], [[0.0]], BOX1, BOX1, BOX1)
        traj = simulate_linear(sys, 3, 0)
        for st in run_filter(sys, traj):
            box = interval_hull(st.posterior)
            np.testing.assert_allclose(box.lower, traj.states[st.k], atol=1e-9)
            np.testing.assert_allclose(box.upper, traj.states[st.k], atol=1e-9)

    def test_block_growth(self):
        sys = planar_benchmark()
        f = run_filter(sys, simulate_linear(sys, 4, 0))
        ng_w, ng_v, m = 1, 2, 2
        for a, b in zip(f, f[1:]):
            assert b.posterior.n_generators == a.posterior.n_generators + ng_w + ng_v
            assert b.posterior.n_constraints == a.posterior.n_constraints + m
        assert f[0].posterior.n_generators == 2 + ng_v

    @pytest.mark.parametrize("seed", range(3))
    def test_true_state_contained(self, seed):
        sys = planar_benchmark()
        traj = simulate_linear(sys, 50, seed)
        for st in run_filter(sys, traj):
            assert contains_point(st.posterior, traj.states[st.k])

    def test_inconsistent_data(self):
        sys = planar_benchmark()
        ys = simulate_linear(sys, 2, 0).measurements.copy()
        ys[1] += 100.0
        with pytest.raises(InconsistentDataError) as err:
            run_filter(sys, ys, check_empty=True)
        assert err.value.k == 1
        assert not run_filter(sys, ys)[1].consistent

    def test_measurement_dimension(self):
        with pytest.raises(ValueError):
            run_filter(planar_benchmark(), np.zeros((3, 3)))

    def test_matches_grid_oracle_on_two_steps(self):
        sys = planar_benchmark()
        traj = simulate_linear(sys, 2, 4)
        f = run_filter(sys, traj)
        delta = 0.05
        boxes = [interval_hull(st.posterior) for st in f]
        grid = grid_filter(sys, traj.measurements, [b.inflate(0.1) for b in boxes], delta)
        for box, g in zip(boxes, grid):
            gb = hull_of_grid(g)
            assert np.max(np.abs(gb.lower - box.lower)) <= 2 * delta
            assert np.max(np.abs(gb.upper - box.upper)) <= 2 * delta
            assert np.max(box.widths) == pytest.approx(np.max(gb.widths), abs=4 * delta)
