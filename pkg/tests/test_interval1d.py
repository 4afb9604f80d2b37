import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zonosmooth.errors import InconsistentDataError
from zonosmooth.interval1d import (
    Interval,
    MonotoneMap,
    OutOfDomainError,
    eta_inverse,
    filter_step_1d,
    run_filter_1d,
    run_smoother_1d,
    smooth_step_1d,
)
from zonosmooth.model import ScalarAffineSystem, cube_root_benchmark, simulate_scalar

from helpers import cube_inverse_vec

IDENTITY = MonotoneMap(lambda x: x, name="id")
CUBE = cube_root_benchmark().eta


class TestInterval:
    def test_order_enforced(self):
        with pytest.raises(ValueError):
            Interval(1.0, 0.0)

    def test_intersection(self):
        assert Interval(0, 2).intersect(Interval(1, 3)) == Interval(1, 2)
        assert Interval(0, 1).intersect(Interval(2, 3)).empty

    def test_empty_width(self):
        assert Interval.make_empty().width == 0.0


class TestMonotoneMap:
    def test_rejects_non_monotone(self):
        with pytest.raises(ValueError):
            MonotoneMap(lambda x: x * x)

    def test_declared_direction_checked(self):
        with pytest.raises(ValueError):
            MonotoneMap(lambda x: -x, increasing=True)

    def test_decreasing_image(self):
        m = MonotoneMap(lambda x: -2 * x)
        assert not m.increasing
        assert m.image(Interval(0, 1)) == Interval(-2, 0)


class TestEtaInverse:
    def test_identity(self):
        # bisection stops at the documented 1e-12 relative residual
        assert abs(eta_inverse(IDENTITY, 3.0) - 3.0) <= 1e-12 * 4.0

    def test_cube_root_drift(self):
        assert eta_inverse(CUBE, 10.0) == pytest.approx(8.0, rel=1e-12)

    @given(st.floats(-1e6, 1e6, allow_nan=False))
    def test_round_trip(self, y):
        x = eta_inverse(CUBE, y)
        assert abs(CUBE(x) - y) <= 1e-12 * (1 + abs(y))

    @given(st.floats(-100, 100, allow_nan=False))
    def test_decreasing_round_trip(self, y):
        m = MonotoneMap(lambda x: -x - x**3)
        assert abs(m(eta_inverse(m, y)) - y) <= 1e-12 * (1 + abs(y))

    def test_outside_image(self):
        m = MonotoneMap(math.exp, domain=(-5.0, 5.0))
        with pytest.raises(OutOfDomainError):
            eta_inverse(m, 1e6)
        with pytest.raises(OutOfDomainError):
            eta_inverse(m, float("nan"))


class TestFilterStep:
    def test_measurement_interval(self):
        base = cube_root_benchmark()
        sys = ScalarAffineSystem(base.eta, 2.0, base.w_range, base.v_range, Interval(-10.0, 10.0))
        prior, post = filter_step_1d(None, 10.0, sys)
        assert prior == Interval(-10.0, 10.0)
        assert post == Interval(3.5, 4.5)

    def test_identity_without_noise(self):
        sys = ScalarAffineSystem(IDENTITY, 1.0, Interval(0, 0), Interval(-100, 100), Interval(-1, 1))
        prior, _ = filter_step_1d(Interval(0.2, 0.7), 0.0, sys)
        assert prior == Interval(0.2, 0.7)

    def test_negative_gain(self):
        sys = ScalarAffineSystem(IDENTITY, -2.0, Interval(0, 0), Interval(-1, 1), Interval(-10, 10))
        _, post = filter_step_1d(None, 4.0, sys)
        assert post == Interval(-2.5, -1.5)

    def test_inconsistent_raises(self):
        sys = cube_root_benchmark()
        with pytest.raises(InconsistentDataError):
            run_filter_1d(sys, [100.0])


class TestSmoothStep:
    def test_endpoint_arithmetic(self):
        out = smooth_step_1d(Interval(0, 4), Interval(2, 3), Interval(-1, 1), IDENTITY)
        assert out == Interval(1, 4)

    def test_full_image_changes_nothing(self):
        P = Interval(-0.5, 1.5)
        img = CUBE.image(P)
        W = Interval(-1, 1)
        nxt = Interval(img.a + W.a, img.b + W.b)
        out = smooth_step_1d(P, nxt, W, CUBE)
        assert out.a == pytest.approx(P.a, abs=1e-12) and out.b == pytest.approx(P.b, abs=1e-12)

    def test_degenerate_noise_is_a_shift(self):
        P, S, w0 = Interval(-2, 3), Interval(1.0, 2.5), 0.3
        out = smooth_step_1d(P, S, Interval(w0, w0), CUBE)
        lo, hi = cube_inverse_vec([S.a - w0, S.b - w0])
        assert out.a == pytest.approx(max(P.a, lo), abs=1e-12)
        assert out.b == pytest.approx(min(P.b, hi), abs=1e-12)

    def test_decreasing_map(self):
        m = MonotoneMap(lambda x: -x)
        out = smooth_step_1d(Interval(-10, 10), Interval(1, 2), Interval(0, 0), m)
        assert out == Interval(-2, -1)

    @pytest.mark.parametrize("seed", range(4))
    def test_dense_grid_single_step(self, seed):
        # keep grid points x of the posterior whose successors eta(x) + W reach the next range
        rng = np.random.default_rng(seed)
        P = Interval(*sorted(rng.uniform(-3, 3, 2)))
        x_next = CUBE(rng.uniform(P.a, P.b)) + rng.uniform(-1, 1)
        S = Interval(x_next - 0.2, x_next + 0.3)
        W = Interval(-1.0, 1.0)
        delta = 1e-4
        xs = np.arange(P.a, P.b + delta, delta)
        xs = xs[xs <= P.b]
        succ = np.cbrt(xs) + xs
        keep = xs[(succ + W.b >= S.a) & (succ + W.a <= S.b)]
        out = smooth_step_1d(P, S, W, CUBE)
        assert abs(out.a - keep.min()) <= delta
        assert abs(out.b - keep.max()) <= delta

    @given(st.floats(-5, 5), st.floats(0.01, 3), st.floats(-1, 0), st.floats(0, 1))
    def test_endpoint_attainment_grid_search(self, a, width, wa, wb):
        # min/max of eta^-1(x - w) over the rectangle sit at opposite corners
        S, W = Interval(a, a + width), Interval(wa, wb)
        xs, ws = np.linspace(S.a, S.b, 200), np.linspace(W.a, W.b, 200)
        vals = cube_inverse_vec(xs[:, None] - ws[None, :])
        lo, hi = eta_inverse(CUBE, S.a - W.b), eta_inverse(CUBE, S.b - W.a)
        assert abs(vals.min() - lo) <= 1e-9
        assert abs(vals.max() - hi) <= 1e-9
        # the corners are attained; interior grid points never go beyond them
        assert vals.min() >= lo - 1e-9 and vals.max() <= hi + 1e-9

    def test_empty_inputs(self):
        assert smooth_step_1d(Interval.make_empty(), Interval(0, 1), Interval(0, 0), IDENTITY).empty


class TestRecursion:
    def test_horizon_zero(self):
        sys = cube_root_benchmark()
        f = run_filter_1d(sys, simulate_scalar(sys, 0, 0).measurements)
        assert run_smoother_1d(f, sys) == [f[0].posterior]

    @pytest.mark.parametrize("seed", range(5))
    def test_contained_and_never_wider(self, seed):
        sys = cube_root_benchmark()
        traj = simulate_scalar(sys, 50, seed)
        f = run_filter_1d(sys, traj.measurements)
        sm = run_smoother_1d(f, sys)
        x = traj.states.reshape(-1)
        for k in range(51):
            P = f[k].posterior
            assert P.contains(x[k], tol=1e-9)
            assert sm[k].contains(x[k], tol=1e-9)
            assert P.a <= sm[k].a and sm[k].b <= P.b
