import numpy as np
import pytest

from dynesim.controllers import (
    Controller,
    ControllerConfig,
    make_controller,
    phase_condition_error,
    wrap_angle,
    wrap_half_pi,
)
from dynesim.modeshape import flat_gamma, mode_shape_from_gamma
from dynesim.states import TimeGrid

GRID = TimeGrid(dt=1e-9, n_steps=13000)
MODE = mode_shape_from_gamma(flat_gamma(10e-6, 1.4e6, GRID))
FLAT = mode_shape_from_gamma(flat_gamma(10e-6, 1e12, GRID))


class TestConfig:
    def test_unknown_scheme_rejected(self):
        with pytest.raises(ValueError, match="scheme"):
            ControllerConfig(scheme="polyphase")

    def test_replay_needs_source(self):
        with pytest.raises(ValueError, match="replay"):
            ControllerConfig(scheme="replay")

    def test_negative_delay_rejected(self):
        with pytest.raises(ValueError):
            ControllerConfig(delay=-1e-9)

    def test_unknown_adaptive_mode_rejected(self):
        with pytest.raises(ValueError, match="adaptive_mode"):
            ControllerConfig(adaptive_mode="pid")


class TestStaticSchemes:
    def test_homodyne_holds_phase(self):
        ctrl = Controller(ControllerConfig(scheme="homodyne", phi0=0.7), MODE)
        for k in (0, 100, 12999):
            assert ctrl.next_phase(k)[0] == 0.7
            ctrl.ingest_record(np.array([1e-4]), k)
        assert ctrl.next_phase(500)[0] == 0.7

    def test_heterodyne_linear_ramp(self):
        # at f = 0.5 MHz the phase advances by pi over 1 us
        ctrl = Controller(ControllerConfig(scheme="heterodyne", f_het=5e5,
                                           phi0=0.2), MODE)
        assert ctrl.next_phase(0)[0] == pytest.approx(0.2)
        assert ctrl.next_phase(1000)[0] == pytest.approx(0.2 + np.pi)
        assert ctrl.next_phase(4000)[0] == pytest.approx(0.2 + 4 * np.pi)

    def test_replay_emits_source_bitwise(self):
        rng = np.random.default_rng(0)
        program = rng.uniform(-3, 3, size=(2, GRID.n_steps))
        ctrl = Controller(ControllerConfig(scheme="replay",
                                           replay_source=program),
                          MODE, batch=2)
        for k in (0, 17, 9999):
            np.testing.assert_array_equal(ctrl.next_phase(k), program[:, k])

    def test_replay_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="steps"):
            Controller(ControllerConfig(scheme="replay",
                                        replay_source=np.zeros((1, 10))),
                       MODE)

    def test_step_index_bounds(self):
        ctrl = Controller(ControllerConfig(scheme="homodyne"), MODE)
        with pytest.raises(IndexError):
            ctrl.next_phase(GRID.n_steps)


class TestProportionalFeedback:
    def test_single_step_increment(self):
        # flat mode: P(4 us) = 500, so V_dt = 1e-5 advances phi by 5e-3
        ctrl = Controller(ControllerConfig(scheme="adaptive", phi0=1.0), FLAT)
        k = 4000
        ctrl.ingest_record(np.array([1e-5]), k)
        assert ctrl.next_phase(k + 1)[0] == pytest.approx(1.0 + 5e-3, rel=1e-3)

    def test_delay_shifts_response_by_buffer_depth(self):
        # an impulse at step k first moves the phase emitted at k + D + 1
        D = 374
        cfg = ControllerConfig(scheme="adaptive", delay=D * GRID.dt)
        ctrl = Controller(cfg, FLAT)
        k0 = 5000
        for k in range(k0, k0 + 2 * D):
            v = np.array([1e-4]) if k == k0 else np.array([0.0])
            before = ctrl.next_phase(k).copy()
            ctrl.ingest_record(v, k)
            after = ctrl.next_phase(k + 1)
            if k == k0 + D:
                assert after[0] != before[0]
            else:
                assert after[0] == before[0]

    def test_delayed_gain_epoch(self):
        # the gain applied to a delayed sample is the gain at emission time
        D = 374
        cfg = ControllerConfig(scheme="adaptive", delay=D * GRID.dt)
        ctrl = Controller(cfg, FLAT)
        k0 = 4000
        for k in range(k0, k0 + D + 1):
            v = np.array([1e-5]) if k == k0 else np.array([0.0])
            ctrl.ingest_record(v, k)
        # P at the emission step of the impulse, not at the pop step
        assert ctrl.phi[0] == pytest.approx(ctrl.gain[k0] * 1e-5, rel=1e-12)

    def test_filter_step_response(self):
        # first-order IIR with unit DC gain: y_n = x (1 - (1-alpha)^n)
        tau = 128e-9
        cfg = ControllerConfig(scheme="adaptive", filter_tau=tau)
        ctrl = Controller(cfg, FLAT)
        alpha = 1.0 - np.exp(-GRID.dt / tau)
        x = 2e-5
        phi_prev = ctrl.phi[0]
        for n, k in enumerate(range(1000, 1400), start=1):
            ctrl.ingest_record(np.array([x]), k)
            y = ctrl.filter_y[0]
            assert y == pytest.approx(x * (1.0 - (1.0 - alpha) ** n), rel=1e-9)
        # after ~3 tau the filtered value carries nearly the full DC input
        assert ctrl.filter_y[0] > 0.95 * x
        assert ctrl.phi[0] != phi_prev

    def test_slew_limit_clamps_increment(self):
        cfg = ControllerConfig(scheme="adaptive", slew_limit=1e6)
        ctrl = Controller(cfg, FLAT)
        ctrl.ingest_record(np.array([1.0]), 4000)  # would be a huge kick
        assert ctrl.phi[0] == pytest.approx(1e6 * GRID.dt)

    def test_batch_lanes_do_not_mix(self):
        ctrl = Controller(ControllerConfig(scheme="adaptive"), FLAT, batch=3)
        ctrl.ingest_record(np.array([1e-5, 0.0, -1e-5]), 4000)
        phi = ctrl.next_phase(4001)
        assert phi[1] == 0.0
        assert phi[0] == -phi[2] != 0.0


class TestArgRFeedback:
    def test_tracks_accumulated_estimator(self):
        # phi settles on arg(R) + pi/2 with R built from the live phases
        cfg = ControllerConfig(scheme="adaptive", adaptive_mode="arg_r",
                               phi0=0.3)
        ctrl = Controller(cfg, FLAT)
        rng = np.random.default_rng(1)
        R = 0.0 + 0.0j
        sqrt_u = np.sqrt(FLAT.u)
        for k in range(2000, 2200):
            v = rng.normal(scale=np.sqrt(GRID.dt))
            phi_live = ctrl.next_phase(k)[0]
            ctrl.ingest_record(np.array([v]), k)
            R += np.exp(1j * phi_live) * sqrt_u[k] * v
            assert wrap_angle(ctrl.phi[0] - (np.angle(R) + np.pi / 2)) == \
                pytest.approx(0.0, abs=1e-12)

    def test_holds_phase_without_signal(self):
        cfg = ControllerConfig(scheme="adaptive", adaptive_mode="arg_r",
                               phi0=1.1)
        ctrl = Controller(cfg, FLAT)
        for k in range(100):
            ctrl.ingest_record(np.array([0.0]), k)
        assert ctrl.phi[0] == 1.1

    def test_theta_property(self):
        ctrl = Controller(ControllerConfig(scheme="adaptive", phi0=2.0), FLAT)
        assert ctrl.theta[0] == pytest.approx(2.0 - np.pi / 2)


class TestAngleHelpers:
    def test_wrap_angle_range_and_fixed_points(self):
        assert wrap_angle(np.pi) == pytest.approx(np.pi)
        assert wrap_angle(-np.pi) == pytest.approx(np.pi)
        assert wrap_angle(3 * np.pi) == pytest.approx(np.pi)
        assert wrap_angle(0.4) == pytest.approx(0.4)
        a = np.linspace(-20, 20, 2001)
        w = wrap_angle(a)
        assert np.all((w > -np.pi - 1e-12) & (w <= np.pi + 1e-12))
        np.testing.assert_allclose(np.cos(w), np.cos(a), atol=1e-12)

    def test_wrap_half_pi_pi_periodic(self):
        assert wrap_half_pi(0.2) == pytest.approx(0.2)
        assert wrap_half_pi(0.2 + np.pi) == pytest.approx(0.2)
        assert wrap_half_pi(np.pi / 2) == pytest.approx(-np.pi / 2)
        a = np.linspace(-10, 10, 1001)
        w = wrap_half_pi(a)
        assert np.all((w >= -np.pi / 2 - 1e-12) & (w < np.pi / 2 + 1e-12))
        np.testing.assert_allclose(np.tan(w), np.tan(a), rtol=1e-6)

    def test_phase_condition_error(self):
        # zero exactly on the measurement condition phi = theta + pi/2
        theta = np.array([0.4])
        assert phase_condition_error(theta + np.pi / 2, theta)[0] == \
            pytest.approx(0.0)
        assert phase_condition_error(theta + np.pi / 2 + 0.1, theta)[0] == \
            pytest.approx(-0.1)
        # pi-ambiguous: a pi offset is also on condition
        assert phase_condition_error(theta + 3 * np.pi / 2, theta)[0] == \
            pytest.approx(0.0, abs=1e-12)


def test_make_controller_passes_through():
    ctrl = make_controller(ControllerConfig(scheme="homodyne", phi0=0.5),
                           MODE, batch=4)
    assert ctrl.batch == 4
    np.testing.assert_array_equal(ctrl.next_phase(0), np.full(4, 0.5))
