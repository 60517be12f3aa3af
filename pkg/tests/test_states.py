import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dynesim.states import (
    EXCITED,
    GROUND,
    MAXIMALLY_MIXED,
    BlochVector,
    DensityMatrix,
    PureAmplitudes,
    TimeGrid,
    bloch_from_rho,
    dipole_phase,
    purity,
    rho_from_bloch,
    superposition_state,
)


def bloch_vectors(max_norm=1.0):
    return st.tuples(
        st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)
    ).map(lambda t: BlochVector(*t)).filter(lambda b: b.norm <= max_norm)


class TestTimeGrid:
    def test_total_consistent(self):
        grid = TimeGrid(dt=1e-9, n_steps=13000)
        assert grid.total == pytest.approx(13e-6)
        assert len(grid.times()) == 13001

    @pytest.mark.parametrize("dt,n", [(0.0, 10), (-1e-9, 10), (1e-9, 0)])
    def test_rejects_bad_params(self, dt, n):
        with pytest.raises(ValueError):
            TimeGrid(dt=dt, n_steps=n)


class TestBlochConversion:
    def test_excited_state_is_north_pole(self):
        b = bloch_from_rho(EXCITED)
        assert (b.x, b.y, b.z) == (0.0, 0.0, 1.0)

    def test_maximally_mixed_is_origin(self):
        b = bloch_from_rho(MAXIMALLY_MIXED)
        assert (b.x, b.y, b.z) == (0.0, 0.0, 0.0)

    def test_equal_superposition_points_along_x(self):
        b = bloch_from_rho(superposition_state(0.0))
        assert b.x == pytest.approx(1.0)
        assert b.y == pytest.approx(0.0, abs=1e-15)
        assert b.z == pytest.approx(0.0, abs=1e-15)

    @given(bloch_vectors())
    def test_round_trip(self, b):
        back = bloch_from_rho(rho_from_bloch(b))
        assert abs(back.x - b.x) < 1e-12
        assert abs(back.y - b.y) < 1e-12
        assert abs(back.z - b.z) < 1e-12

    @given(st.floats(-math.pi, math.pi))
    def test_dipole_phase_matches_preparation(self, theta):
        # the azimuth convention is pinned to the prepared phase
        rho = superposition_state(theta)
        assert dipole_phase(rho) == pytest.approx(theta, abs=1e-12)


class TestPurity:
    def test_maximally_mixed(self):
        assert purity(MAXIMALLY_MIXED) == 0.5

    def test_projectors(self):
        assert purity(GROUND) == 1.0
        assert purity(superposition_state(1.3)) == pytest.approx(1.0)

    def test_diagonal_mixture(self):
        rho = DensityMatrix(rho_mm=0.25, rho_pp=0.75, rho_mp=0.0j)
        assert purity(rho) == pytest.approx(0.625)

    @given(bloch_vectors())
    def test_purity_from_bloch_norm(self, b):
        rho = rho_from_bloch(b)
        assert purity(rho) == pytest.approx(0.5 * (1.0 + b.norm**2), abs=1e-12)


class TestPureAmplitudes:
    def test_to_density_normalizes(self):
        psi = PureAmplitudes(c_minus=3.0 + 0j, c_plus=4.0j)
        rho = psi.to_density()
        assert rho.trace == pytest.approx(1.0)
        assert purity(rho) == pytest.approx(1.0)

    def test_null_state_rejected(self):
        with pytest.raises(ValueError):
            PureAmplitudes(0j, 0j).to_density()


class TestValidation:
    def test_valid_state_passes(self):
        superposition_state(0.4).validate()

    def test_trace_violation_detected(self):
        with pytest.raises(ValueError, match="trace"):
            DensityMatrix(0.6, 0.6, 0.0j).validate()

    def test_positivity_violation_detected(self):
        with pytest.raises(ValueError, match="positive"):
            DensityMatrix(0.5, 0.5, 0.9 + 0j).validate()
