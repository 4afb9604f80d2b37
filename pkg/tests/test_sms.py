import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zonosmooth.cz import (
    ConstrainedZonotope,
    contains_point,
    diameter_inf,
    generalized_intersection,
    interval_hull,
    linear_map,
    minkowski_sum,
    sample_points,
)
from zonosmooth.errors import InconsistentDataError
from zonosmooth.model import LinearSystem, planar_benchmark, simulate_linear
from zonosmooth.oracle import grid_filter, grid_smooth, hull_of_grid
from zonosmooth.smf import predict, run_filter
from zonosmooth.sms import run_smoother, smooth_step

from helpers import corrected_smoothing_blocks, literal_smoothing_blocks, random_cz


def random_system(rng, W):
    n, p = 2, W.dim
    return LinearSystem(
        Phi=rng.standard_normal((n, n)), Gamma=rng.standard_normal((n, p)), Xi=np.eye(n), Psi=np.eye(n),
        w_range=W, v_range=ConstrainedZonotope.from_box([-1, -1], [1, 1]),
        x0_range=ConstrainedZonotope.from_box([-1, -1], [1, 1]),
    )


def centred_noise(rng, p=1, ng=2, nc=1):
    G = rng.standard_normal((p, ng))
    A = rng.standard_normal((nc, ng))
    return ConstrainedZonotope(G, np.zeros(p), A, np.zeros(nc), rng.uniform(0.5, 1.5, ng))


def quintuple(Z):
    return Z.G, Z.c, Z.A.toarray(), Z.b, Z.h


class TestBlockIdentity:
    @given(st.integers(0, 2**32 - 1))
    def test_centred_noise_matches_literal_blocks(self, seed):
        rng = np.random.default_rng(seed)
        W = centred_noise(rng, p=int(rng.integers(1, 3)), nc=int(rng.integers(0, 2)))
        sys = random_system(rng, W)
        P = random_cz(rng, ng=int(rng.integers(2, 6)), nc=int(rng.integers(0, 3)))
        S = random_cz(rng, ng=int(rng.integers(2, 6)), nc=int(rng.integers(0, 3)))
        got = quintuple(smooth_step(P, S, sys, 0))
        want = literal_smoothing_blocks(P, S, W, sys.Phi, sys.Gamma)
        for g, w in zip(got, want):
            np.testing.assert_array_equal(g, w)

    @given(st.integers(0, 2**32 - 1))
    def test_offcentre_noise_matches_reflected_blocks(self, seed):
        rng = np.random.default_rng(seed)
        W = random_cz(rng, n=1, ng=2, nc=1)
        sys = random_system(rng, W)
        P, S = random_cz(rng, nc=1), random_cz(rng, nc=2)
        got = quintuple(smooth_step(P, S, sys, 0))
        want = corrected_smoothing_blocks(P, S, W, sys.Phi, sys.Gamma)
        for g, w in zip(got, want):
            np.testing.assert_array_equal(g, w)

    def test_block_counts(self, rng):
        sys = planar_benchmark()
        P, S = random_cz(rng, nc=2), random_cz(rng, ng=5, nc=1)
        out = smooth_step(P, S, sys, 0)
        W = sys.w_range
        assert out.n_constraints == P.n_constraints + S.n_constraints + W.n_constraints + 2
        assert out.n_generators == P.n_generators + S.n_generators + W.n_generators


class TestSmoothStep:
    def test_uninformative_future(self, rng):
        sys = planar_benchmark()
        P = run_filter(sys, simulate_linear(sys, 1, 2))[0].posterior
        out = smooth_step(P, predict(P, sys, 0), sys, 0)
        hp, ho = interval_hull(P), interval_hull(out)
        np.testing.assert_allclose(ho.lower, hp.lower, atol=1e-9)
        np.testing.assert_allclose(ho.upper, hp.upper, atol=1e-9)
        for x in sample_points(P, 50, rng):
            assert contains_point(out, x)
        for x in sample_points(out, 50, rng):
            assert contains_point(P, x)

    @pytest.mark.parametrize("seed", range(5))
    def test_negated_noise_form_gives_same_set(self, seed):
        # S ⊕ (-Gamma) W describes the same set as S ⊕ Gamma (-W)
        rng = np.random.default_rng(seed)
        W = random_cz(rng, n=1, ng=2, nc=1)
        sys = random_system(rng, W)
        P = random_cz(rng, nc=1)
        # a box around one reachable point keeps the smoothed set nonempty
        x = sys.Phi @ sample_points(P, 1, rng)[0] + sys.Gamma @ sample_points(W, 1, rng)[0]
        S = ConstrainedZonotope.from_box(x - 0.3, x + 0.3)
        alt = generalized_intersection(P, sys.Phi, minkowski_sum(S, linear_map(-sys.Gamma, W)))
        h1, h2 = interval_hull(smooth_step(P, S, sys, 0)), interval_hull(alt)
        np.testing.assert_allclose(h1.lower, h2.lower, atol=1e-8)
        np.testing.assert_allclose(h1.upper, h2.upper, atol=1e-8)

    def test_offcentre_noise_against_oracle(self):
        # shift the process noise off-centre; the polygon oracle settles the sign convention
        base = planar_benchmark()
        W = ConstrainedZonotope.from_box([-0.2], [1.0])
        sys = LinearSystem(base.Phi, base.Gamma, base.Xi, base.Psi, W, base.v_range, base.x0_range)
        traj = simulate_linear(sys, 2, 5)
        f = run_filter(sys, traj)
        sm = run_smoother(f, sys)
        delta = 0.02
        boxes = [interval_hull(s.posterior).inflate(0.1) for s in f]
        gs = grid_smooth(grid_filter(sys, traj.measurements, boxes, delta), sys)
        for k in range(3):
            hc, ho = interval_hull(sm[k]), hull_of_grid(gs[k])
            assert np.max(np.abs(hc.lower - ho.lower)) <= 2 * delta
            assert np.max(np.abs(hc.upper - ho.upper)) <= 2 * delta

    def test_wrong_dimension(self):
        sys = planar_benchmark()
        with pytest.raises(ValueError):
            smooth_step(ConstrainedZonotope.point([0.0]), ConstrainedZonotope.point([0.0, 0.0]), sys, 0)

    def test_empty_smoothed_range_halts(self):
        sys = planar_benchmark()
        P = ConstrainedZonotope.from_box([-1, -1], [1, 1])
        far = ConstrainedZonotope.from_box([50, 50], [51, 51])
        with pytest.raises(InconsistentDataError):
            smooth_step(P, far, sys, 0, check_empty=True)


class TestRunSmoother:
    def test_horizon_zero(self):
        sys = planar_benchmark()
        f = run_filter(sys, simulate_linear(sys, 0, 0))
        out = run_smoother(f, sys)
        assert len(out) == 1 and out[0] is f[0].posterior

    def test_requires_ordered_filter_output(self):
        sys = planar_benchmark()
        f = run_filter(sys, simulate_linear(sys, 2, 0))
        with pytest.raises(ValueError):
            run_smoother(f[::-1], sys)

    def test_empty_input(self):
        assert len(run_smoother([], planar_benchmark())) == 0

    @pytest.mark.parametrize("seed", range(2))
    def test_never_worse_and_contained(self, seed, rng):
        sys = planar_benchmark()
        traj = simulate_linear(sys, 50, seed)
        f = run_filter(sys, traj)
        sm = run_smoother(f, sys)
        for k in range(50, -1, -1):
            hs, hf = interval_hull(sm[k]), interval_hull(f[k].posterior)
            assert diameter_inf(sm[k]) <= diameter_inf(f[k].posterior) + 1e-7
            assert np.all(hs.lower >= hf.lower - 1e-7) and np.all(hs.upper <= hf.upper + 1e-7)
            assert contains_point(sm[k], traj.states[k])

    def test_smoothed_samples_in_posterior(self, rng):
        sys = planar_benchmark()
        f = run_filter(sys, simulate_linear(sys, 4, 9))
        sm = run_smoother(f, sys)
        for k in range(4):
            for x in sample_points(sm[k], 30, rng):
                assert contains_point(f[k].posterior, x)

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_grid_oracle_on_two_steps(self, seed):
        sys = planar_benchmark()
        traj = simulate_linear(sys, 2, seed)
        f = run_filter(sys, traj)
        sm = run_smoother(f, sys)
        delta = 0.05
        boxes = [interval_hull(s.posterior).inflate(0.1) for s in f]
        gs = grid_smooth(grid_filter(sys, traj.measurements, boxes, delta), sys)
        for k in range(3):
            hc, ho = interval_hull(sm[k]), hull_of_grid(gs[k])
            assert np.max(np.abs(hc.lower - ho.lower)) <= 2 * delta
            assert np.max(np.abs(hc.upper - ho.upper)) <= 2 * delta
