import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynesim.modeshape import (
    GammaSchedule,
    constant_gamma,
    export_mode_csv,
    feedback_gain,
    flat_gamma,
    gain_profile,
    mode_shape_from_gamma,
)
from dynesim.states import TimeGrid

GRID = TimeGrid(dt=1e-9, n_steps=13000)
TAU = 10e-6
GMAX = 1.4e6


@pytest.fixture(scope="module")
def default_mode():
    return mode_shape_from_gamma(flat_gamma(TAU, GMAX, GRID))


class TestFlatGamma:
    def test_uncapped_closed_form(self):
        # 1/(tau - t) at t = 5 us
        sched = flat_gamma(TAU, 1e12, GRID)
        k = 5000
        assert sched.gamma[k] == pytest.approx(2e5, rel=1e-9)

    def test_value_at_origin(self):
        sched = flat_gamma(TAU, GMAX, GRID)
        assert sched.gamma[0] == pytest.approx(1.0 / TAU)

    def test_crossover_location(self):
        sched = flat_gamma(TAU, GMAX, GRID)
        t_star = TAU - 1.0 / GMAX  # ~9.286 us
        k = int(round(t_star / GRID.dt))
        assert sched.gamma[k] == pytest.approx(GMAX, rel=1e-3)
        # continuous at the crossover: one step earlier is still below cap
        assert sched.gamma[k - 4] < GMAX

    def test_capped_after_tau(self):
        sched = flat_gamma(TAU, GMAX, GRID)
        assert np.all(sched.gamma[int(TAU / GRID.dt) :] == GMAX)

    def test_rejects_tau_beyond_record(self):
        with pytest.raises(ValueError, match="tau"):
            flat_gamma(GRID.total, GMAX, GRID)
        with pytest.raises(ValueError, match="tau"):
            flat_gamma(14e-6, GMAX, GRID)

    def test_rejects_weak_cap(self):
        with pytest.raises(ValueError, match="gamma_max"):
            flat_gamma(TAU, 0.5 / TAU, GRID)


class TestModeShape:
    def test_constant_rate_gives_exponential(self):
        rate = 2e5
        sched = constant_gamma(rate, GRID)
        mode = mode_shape_from_gamma(sched)
        t = GRID.times()
        np.testing.assert_allclose(mode.u, rate * np.exp(-rate * t), rtol=1e-6)

    def test_flat_schedule_gives_flat_mode(self):
        mode = mode_shape_from_gamma(flat_gamma(TAU, 1e12, GRID))
        inside = GRID.times() < 0.9 * TAU
        np.testing.assert_allclose(mode.u[inside], 1.0 / TAU, rtol=1e-3)

    def test_default_residual_below_one_percent(self, default_mode):
        assert default_mode.residual < 0.01

    def test_survival_monotone_from_one(self, default_mode):
        assert default_mode.survival[0] == 1.0
        assert np.all(np.diff(default_mode.survival) <= 0.0)

    def test_integral_plus_residual_is_one(self, default_mode):
        assert default_mode.cum_u[-1] + default_mode.residual == pytest.approx(
            1.0, abs=1e-6
        )


class TestFeedbackGain:
    def test_flat_mode_closed_form(self, default_mode):
        # for flat u, P(t) = 1/sqrt(t)
        k1 = int(1e-6 / GRID.dt)
        k4 = int(4e-6 / GRID.dt)
        assert feedback_gain(default_mode, k1) == pytest.approx(1000.0, rel=1e-3)
        assert feedback_gain(default_mode, k4) == pytest.approx(500.0, rel=1e-3)

    def test_zero_intensity_gives_zero_gain(self):
        grid = TimeGrid(dt=1e-8, n_steps=1000)
        gamma = np.zeros(1001)
        gamma[:500] = 1e5
        sched = GammaSchedule(grid=grid, gamma=gamma, gamma_max=1e5, tau=1e-5)
        profile = gain_profile(mode_shape_from_gamma(sched))
        assert np.all(profile[500:] == 0.0)

    def test_early_time_clamp(self, default_mode):
        profile = gain_profile(default_mode)
        assert np.all(profile[:8] == profile[8])
        assert np.all(np.isfinite(profile))

    def test_definition_identity_on_grid(self, default_mode):
        # P^2 * cumulative integral == u wherever the clamp is inactive
        p = gain_profile(default_mode)
        sel = slice(8, None)
        np.testing.assert_allclose(
            p[sel] ** 2 * default_mode.cum_u[sel], default_mode.u[sel], rtol=1e-12
        )

    def test_index_bounds(self, default_mode):
        with pytest.raises(IndexError):
            feedback_gain(default_mode, GRID.n_steps + 1)


@settings(max_examples=25, deadline=None)
@given(
    tau=st.floats(2e-6, 6e-6),
    gamma_max=st.floats(8e5, 2e6),
)
def test_any_flat_schedule_is_trapezoid_consistent(tau, gamma_max):
    # rates kept in the resolved regime gamma*dt << 1, as in production runs
    grid = TimeGrid(dt=1e-9, n_steps=8000)
    sched = flat_gamma(tau, gamma_max, grid)
    mode = mode_shape_from_gamma(sched)
    assert np.all(mode.u >= 0.0)
    assert mode.cum_u[-1] + mode.residual == pytest.approx(1.0, abs=1e-6)
    p = gain_profile(mode)
    assert np.all(np.isfinite(p))


def test_mode_csv_round_trips(tmp_path, default_mode):
    path = tmp_path / "mode.csv"
    export_mode_csv(default_mode, path)
    data = np.genfromtxt(path, delimiter=",", names=True)
    assert data["time_s"].size == GRID.n_steps + 1
    np.testing.assert_allclose(data["u_per_s"], default_mode.u, rtol=1e-10)
