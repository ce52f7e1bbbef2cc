import json

import numpy as np
import pytest
from scipy.integrate import quad

from awrascle.bundle import load_bundle
from awrascle.config import Tolerances
from awrascle.models import make_power_law, model_from_config
from awrascle.torus import Grid
from awrascle.verify import (VerificationReport, ar_momentum_flux, bump, bump_d,
                             conserved_quantities, energy_monitor, gauss_panels, odot,
                             offset_defect, strong_continuity, verify_bundle,
                             weak_residual_continuity, weak_residual_momentum)


def travelling(grid, c):
    """Exact continuity pair: rho = 2 + 0.4 sin(pi(x1 - c t)), rho u = c rho e_1."""
    def rho(t):
        return 2.0 + 0.4 * np.sin(np.pi * (grid.coords[0] - c * t))

    def m(t):
        out = np.zeros((grid.d,) + grid.shape)
        out[0] = c * rho(t)
        return out

    return rho, m


class TestTestFunctions:
    def test_bump_integral_and_derivative(self):
        val, _ = quad(lambda s: float(bump(s)), 0, 1)
        assert np.isclose(val, 16.0 / 35.0, rtol=1e-13)
        s = np.linspace(0.05, 0.95, 19)
        fd = (bump(s + 1e-6) - bump(s - 1e-6)) / 2e-6
        assert np.allclose(fd, bump_d(s), atol=1e-7)
        assert bump(0.0) == 0.0 and bump(1.0) == 0.0

    def test_gauss_panels_exact_for_polynomials(self):
        t, w = gauss_panels([0.0, 0.3, 1.0], panels=2, order=4)
        assert np.isclose(np.sum(w * t**7), 1 / 8, rtol=1e-14)
        assert np.all((t > 0) & (t < 1))


class TestWeakResidual:
    def test_exact_solution_has_small_residual(self, grid2):
        rho, m = travelling(grid2, 0.7)
        wr = weak_residual_continuity(grid2, rho, m, 1.0)
        assert wr.relative < 1e-12

    def test_wrong_speed_is_detected(self, grid2):
        rho, _ = travelling(grid2, 0.7)
        _, m = travelling(grid2, 0.5)
        assert weak_residual_continuity(grid2, rho, m, 1.0).relative > 1e-3

    def test_matches_closed_form(self, grid2):
        # q = t f(x), no flux: residual = -(int b) |f_hat| = -(16/35) T |f_hat|
        x = grid2.coords
        f = np.cos(np.pi * x[0])
        wr = weak_residual_momentum(grid2, lambda t: t * f, lambda t: np.zeros((2,) + grid2.shape),
                                    2.0, windows=[(0.0, 2.0)])
        f_hat = 0.5 * grid2.volume
        assert np.isclose(wr.max_abs, 16.0 / 35.0 * 2.0 * f_hat, rtol=1e-12)

    def test_momentum_balance_of_travelling_state(self):
        g = Grid(2, 32)
        model = make_power_law(2.0)
        c = 0.6
        rho, _ = travelling(g, c)

        def u(t):
            return g.constant_vector([c, 0.0])

        def w(t):
            return u(t) + model.offset(g, rho(t))

        wr = weak_residual_momentum(g, lambda t: rho(t) * w(t),
                                    lambda t: ar_momentum_flux(rho(t), u(t), w(t)), 1.0)
        assert wr.relative < 1e-11
        assert offset_defect(g, model, rho(0.3), u(0.3), w(0.3)) < 1e-14

    def test_strong_continuity(self, grid2):
        rho, m = travelling(grid2, 0.7)
        drho = -0.7 * 0.4 * np.pi * np.cos(np.pi * grid2.coords[0])
        assert strong_continuity(grid2, drho, m(0.0)) < 1e-12


class TestDiagnostics:
    def test_odot_traceless(self, rng):
        m = rng.standard_normal((3, 4, 4, 4))
        assert np.allclose(np.trace(odot(m)), 0.0, atol=1e-14)

    def test_conserved(self, grid2):
        rho, m = travelling(grid2, 0.7)
        rep = conserved_quantities(grid2, [rho(t) for t in (0, 0.5, 1)], [m(t) for t in (0, 0.5, 1)])
        assert rep.mass_drift_relative < 1e-14 and rep.momentum_drift_relative < 1e-14

    def test_energy_monitor(self):
        t = np.linspace(0, 1, 5)
        ok = energy_monitor(t, [5, 4, 4, 3, 1])
        assert ok.passed and ok.max_uptick <= 0
        bad = energy_monitor(t, [5, 4, 4.5, 3, 1])
        assert not bad.passed and bad.worst_index == 2 and bad.worst_time == 0.5
        assert np.isclose(bad.max_uptick, 0.5)

    def test_report(self):
        rep = VerificationReport()
        rep.add("a", 1e-12, 1e-10, "first")
        rep.add("b", 2.0, 1.0, "second condition")
        assert not rep.passed
        assert rep.failures() == ["b (second condition): 2.000e+00 > 1.0e+00"]
        assert json.loads(rep.to_json())["checks"]["a"]["pass"] is True


class TestBundleVerification:
    def test_theorem1_bundle_passes(self, built_bundle):
        loaded = load_bundle(built_bundle)
        model = model_from_config(loaded.meta["model"], 2)
        rep = verify_bundle(loaded, model, Tolerances())
        assert rep.passed, rep.failures()
        assert rep.checks["membership"]["margin"] >= 0.9
        assert "energy.monotone" not in rep.checks
        assert rep.info["energy"]["applies"] is False

    def test_admissible_bundle_passes(self, admissible_bundle):
        loaded = load_bundle(admissible_bundle)
        model = model_from_config(loaded.meta["model"], 2)
        rep = verify_bundle(loaded, model, Tolerances())
        assert rep.passed, rep.failures()
        assert rep.checks["lambda.certificate"]["value"] <= 1e-10
        assert rep.checks["membership"]["margin"] >= 0.5
        assert rep.checks["energy.monotone"]["pass"]

    def test_lowered_level_fails_membership(self, built_bundle):
        loaded = load_bundle(built_bundle)
        loaded.Lambda = 0.5 * loaded.Lambda
        rep = verify_bundle(loaded, model_from_config(loaded.meta["model"], 2), Tolerances())
        assert not rep.checks["membership"]["pass"]
        assert any("cc25" in f for f in rep.failures())

    def test_raised_level_breaks_certificate(self, admissible_bundle):
        loaded = load_bundle(admissible_bundle)
        loaded.Lambda = loaded.Lambda.copy()
        loaded.Lambda[5:] += 0.2
        rep = verify_bundle(loaded, model_from_config(loaded.meta["model"], 2), Tolerances())
        assert not rep.checks["lambda.monotone"]["pass"]
        assert not rep.checks["lambda.certificate"]["pass"]
        assert not rep.checks["energy.monotone"]["pass"]

    def test_tampered_flux_detected(self, built_bundle):
        loaded = load_bundle(built_bundle)
        loaded.ends["F"] = loaded.ends["F"] * 1.01
        rep = verify_bundle(loaded, model_from_config(loaded.meta["model"], 2), Tolerances())
        assert not rep.checks["flux.strong"]["pass"]


@pytest.mark.parametrize("K", [2, 4])
def test_mode_cutoff_counts(grid2, K):
    rho, m = travelling(grid2, 0.7)
    wr = weak_residual_continuity(grid2, rho, m, 1.0, K=K, windows=[(0.0, 1.0)])
    # rfft half-plane: m1 in [-K, K], m2 in [0, K]
    assert wr.count == (2 * K + 1) * (K + 1)
