import numpy as np
import pytest

from awrascle.drift import DataPair
from awrascle.errors import BadWindow, IncompatibleMass, PositivityFailure
from awrascle.models import make_power_law
from awrascle.profile import (TimeGrid, build_profile, cumulative_simpson, make_time_shapes,
                              simpson_weights)
from awrascle.scenarios import make_scenario
from awrascle.torus import Grid


@pytest.fixture(scope="module")
def two_mode():
    g = Grid(2, 32)
    model = make_power_law(2.0, h={"direction": [0.5, 0.25], "exponent": 1.0})
    data = DataPair(g, *make_scenario("two-mode-transfer", g, model))
    _, _, phi0 = data.start
    _, _, phiT = data.end
    prof = build_profile(g, data.rho0, data.rhoT, phi0, phiT, TimeGrid(1.0, 17))
    return g, data, prof


class TestTimeShapes:
    def test_endpoint_values_and_slopes(self):
        S = make_time_shapes(1.0, 0.1)
        assert S.H(0.0) == 1.0 and S.H(1.0) == 0.0
        assert S.H.d1(0.0) == 0.0 and S.H.d1(1.0) == 0.0
        assert S.Z0(0.0) == 0.0 and np.isclose(S.Z0.d1(0.0), -1.0)
        assert S.ZT(1.0) == 0.0 and np.isclose(S.ZT.d1(1.0), -1.0)

    def test_cutoffs_vanish_off_support(self):
        S = make_time_shapes(1.0, 0.1, s0=0.2, sT=0.7)
        t = np.linspace(0.0, 1.0, 401)
        assert np.all(S.Z0(t[t > S.Z0.support[1]]) == 0.0)
        assert np.all(S.ZT(t[t < S.ZT.support[0]]) == 0.0)
        assert S.Z0.support[1] <= 0.2 and S.ZT.support[0] >= 0.7

    def test_cutoff_magnitude_below_delta(self):
        S = make_time_shapes(2.0, 0.05)
        t = np.linspace(0.0, 2.0, 4001)
        assert np.max(np.abs(S.Z0(t))) < 0.05
        assert np.max(np.abs(S.ZT(t))) < 0.05

    def test_derivatives_match_differences(self):
        S = make_time_shapes(1.0, 0.3)
        t = np.linspace(0.02, 0.98, 49)
        e = 1e-6
        for shape in (S.H, S.Z0, S.ZT):
            fd = (shape(t + e) - shape(t - e)) / (2 * e)
            assert np.allclose(fd, shape.d1(t), atol=1e-7)

    @pytest.mark.parametrize("s0,sT", [(0.8, 0.3), (0.0, 0.5), (0.2, 1.0)])
    def test_bad_window(self, s0, sT):
        with pytest.raises(BadWindow):
            make_time_shapes(1.0, 0.1, s0, sT)


class TestSimpson:
    def test_weights_integrate_cubic_exactly(self):
        t = np.linspace(0.0, 2.0, 9)
        w = simpson_weights(9, 0.25)
        assert np.isclose(np.dot(w, t**3), 4.0, rtol=1e-14)

    def test_cumulative_exact_for_cubics(self):
        times = np.linspace(0.0, 1.0, 5)
        cum = cumulative_simpson(lambda s: np.stack([s**3, 2 * s]).T, times, knots=(0.3,))
        assert np.allclose(cum[:, 0], times**4 / 4, atol=1e-15)
        assert np.allclose(cum[:, 1], times**2, atol=1e-15)

    def test_fourth_order(self):
        errs = []
        for n in (5, 9, 17):
            times = np.linspace(0.0, 1.0, n)
            cum = cumulative_simpson(lambda s: np.exp(s)[:, None], times)
            errs.append(abs(cum[-1, 0] - (np.e - 1)))
        assert errs[0] / errs[1] > 14 and errs[1] / errs[2] > 14


class TestProfile:
    def test_endpoints_exact(self, two_mode):
        _, data, prof = two_mode
        assert np.array_equal(prof.rho[0], data.rho0)
        assert np.array_equal(prof.rho[-1], data.rhoT)

    def test_invariants(self, two_mode):
        _, _, prof = two_mode
        c = prof.checks
        assert c["c5_start"] <= 1e-10 and c["c5_end"] <= 1e-10
        assert c["mass_drift"] <= 1e-10
        assert c["continuity_max"] <= 1e-10
        assert c["rho_min"] >= c["positivity_floor"]

    def test_phi_solves_poisson(self, two_mode):
        g, _, prof = two_mode
        k = 5
        assert np.allclose(g.laplacian(prof.phi[k]), -prof.drho[k], atol=1e-10)
        assert np.allclose(g.laplacian(prof.dphi[k]), -prof.d2rho[k], atol=1e-9)

    def test_time_derivative_consistent(self, two_mode):
        _, _, prof = two_mode
        t, e = 0.41, 1e-6
        fd = (prof.rho_at(t + e) - prof.rho_at(t - e)) / (2 * e)
        assert np.allclose(fd, prof.drho_at(t), atol=1e-7)

    def test_threads_do_not_change_result(self, two_mode):
        g, data, prof = two_mode
        again = build_profile(g, data.rho0, data.rhoT, prof.phi0, prof.phiT, TimeGrid(1.0, 17),
                              threads=3)
        assert np.array_equal(again.rho, prof.rho)
        assert np.array_equal(again.phi, prof.phi)

    def test_delta_halved_until_positive(self):
        g = Grid(2, 16)
        x = g.coords
        rho = 1.0 + 0.2 * np.sin(np.pi * x[0])
        phi = 0.5 * np.cos(np.pi * x[1])
        prof = build_profile(g, rho, rho, phi, -phi, TimeGrid(1.0, 9), delta0=5.0, theta=0.05)
        assert prof.delta < 5.0
        assert prof.rho_min >= 0.95 * np.min(rho)

    def test_mass_mismatch(self):
        g = Grid(2, 16)
        z = np.zeros(g.shape)
        with pytest.raises(IncompatibleMass):
            build_profile(g, 1.0 + z, 1.1 + z, z, z, TimeGrid(1.0, 5))

    def test_nonpositive_density(self):
        g = Grid(2, 16)
        rho = np.sin(np.pi * g.coords[0])
        with pytest.raises(PositivityFailure):
            build_profile(g, rho, rho, 0 * rho, 0 * rho, TimeGrid(1.0, 5))
