import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import solve_ivp

from awrascle.drift import DataPair
from awrascle.errors import AwRascleError, IncompatibleMass, LambdaDepleted, NotTraceless
from awrascle.models import make_power_law
from awrascle.profile import TimeGrid
from awrascle.scenarios import make_scenario
from awrascle.subsolution import (admissible_bound, assemble_subsolution, energy_field,
                                  lambda_max, membership_from_fields, monotone_interpolant,
                                  pointwise_slack, schedule_lambda_admissible,
                                  schedule_lambda_theorem1)
from awrascle.torus import Grid


def random_symmetric(rng, n, d, scale=1.0):
    a = scale * rng.standard_normal((n, d, d))
    return 0.5 * (a + np.swapaxes(a, 1, 2))


def random_traceless(rng, n, d):
    s = random_symmetric(rng, n, d)
    tr = np.trace(s, axis1=1, axis2=2) / d
    return s - tr[:, None, None] * np.eye(d)


class TestLambdaMax:
    @pytest.mark.parametrize("d", [2, 3])
    def test_against_eigh(self, rng, d):
        A = random_symmetric(rng, 20000, d, scale=3.0)
        ref = np.linalg.eigvalsh(A)[:, -1]
        assert np.max(np.abs(lambda_max(A) - ref)) < 1e-12

    @pytest.mark.parametrize("A", [
        np.eye(3), np.diag([2.0, 2.0, -1.0]), np.diag([-1.0, 2.0, 2.0]), np.diag([5.0, -1.0, -1.0]),
        np.outer([1.0, 2.0, 2.0], [1.0, 2.0, 2.0]), -np.outer([1.0, 0.0, 1.0], [1.0, 0.0, 1.0]),
        np.zeros((3, 3)), 1e-8 * np.diag([1.0, 1.0 + 1e-9, 1.0])])
    def test_degenerate_spectra(self, A):
        assert abs(lambda_max(A) - np.linalg.eigvalsh(A)[-1]) < 1e-13 * max(1.0, np.max(np.abs(A)))

    def test_clustered_pairs_near_r_minus_one(self, rng):
        Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        for gap in (1e-2, 1e-5, 1e-8, 0.0):
            A = Q @ np.diag([1.0, 1.0 - gap, -2.0]) @ Q.T
            assert abs(lambda_max(A) - 1.0) < 1e-13

    def test_rayleigh_quotient_bound(self, rng):
        A = random_symmetric(rng, 2000, 3)
        lm = lambda_max(A)
        x = rng.standard_normal((2000, 3))
        rq = np.einsum("ni,nij,nj->n", x, A, x) / np.einsum("ni,ni->n", x, x)
        assert np.all(rq <= lm + 1e-12)

    def test_batch_shape_and_dimension_limits(self, rng):
        A = random_symmetric(rng, 12, 2).reshape(3, 4, 2, 2)
        assert lambda_max(A).shape == (3, 4)
        assert lambda_max(np.array([[[4.0]]]))[0] == 4.0
        with pytest.raises(ValueError):
            lambda_max(np.zeros((4, 4)))


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, (3, 3), elements=st.floats(-1e3, 1e3)))
def test_lambda_max_hypothesis(M):
    A = 0.5 * (M + M.T)
    ref = np.linalg.eigvalsh(A)[-1]
    assert abs(lambda_max(A) - ref) <= 1e-12 * max(1.0, np.max(np.abs(A)))


class TestPointwiseInequality:
    @pytest.mark.parametrize("d", [2, 3])
    def test_slack_nonnegative(self, rng, d):
        n = 20000
        w = 10 * rng.standard_normal((n, d))
        B = 10 * random_traceless(rng, n, d)
        assert np.min(pointwise_slack(w, B)) >= 0.0

    def test_tight_example(self):
        # w = 0 and B = 0: both sides vanish
        assert pointwise_slack(np.zeros(2), np.zeros((2, 2))) == 0.0

    def test_rejects_trace(self):
        with pytest.raises(NotTraceless):
            pointwise_slack(np.zeros(2), np.eye(2))


class TestMembership:
    def test_theorem1_schedule_margin_equals_eta(self, rng):
        lam = rng.standard_normal((5, 8, 8))
        rate = rng.standard_normal((5, 8, 8))
        L = schedule_lambda_theorem1(lam, rate, 2, 0.7)
        rep = membership_from_fields(np.linspace(0, 1, 5), lam, rate, L, 2)
        assert np.isclose(rep.margin, 0.7, atol=1e-14) and rep.passed
        assert not membership_from_fields(np.linspace(0, 1, 5), lam, rate, L - 1.0, 2).passed

    def test_window_excludes_early_nodes(self):
        t = np.linspace(0, 1, 5)
        lam = np.zeros((5, 2, 2))
        rate = np.zeros((5, 2, 2))
        L = np.array([-5.0, 1.0, 1.0, 2.0, 3.0])
        assert membership_from_fields(t, lam, rate, L, 2).margin == -5.0
        rep = membership_from_fields(t, lam, rate, L, 2, tau=0.1)
        assert rep.margin == 1.0 and rep.window == [0.25, 1.0]
        with pytest.raises(AwRascleError):
            membership_from_fields(t, lam, rate, L, 2, tau=1.0)

    def test_eta_must_be_positive(self):
        with pytest.raises(ValueError):
            schedule_lambda_theorem1(np.zeros((2, 2)), np.zeros((2, 2)), 2, 0.0)

    def test_interpolant_preserves_monotonicity(self):
        t = np.linspace(0, 1, 9)
        L = np.array([5, 5, 4, 4, 3.5, 3.5, 3.5, 1, 0.5])
        d = monotone_interpolant(t, L).derivative()(np.linspace(0, 1, 200))
        assert np.all(d <= 1e-14)


@pytest.fixture(scope="module")
def static_case():
    g = Grid(2, 32)
    rho = 2.0 + 0.5 * np.sin(np.pi * g.coords[0]) * np.sin(np.pi * g.coords[1])
    model = make_power_law(2.0, h={"direction": [0.01, 0.005], "exponent": 1.0})
    return g, rho, model


class TestAdmissibleSchedule:
    def test_bound_closed_form_matches_ode_solver(self, static_case):
        g, rho, model = static_case
        b = admissible_bound(g, rho, model)
        sol = solve_ivp(lambda t, y: b.rate(y), (0, 1), [2.0], rtol=1e-12, atol=1e-14,
                        dense_output=True)
        t = np.linspace(0, 1, 7)
        assert np.allclose(b.exact(2.0, t), sol.sol(t)[0], rtol=1e-9)

    def test_monotone_with_certificate(self, static_case):
        g, rho, model = static_case
        s = schedule_lambda_admissible(g, rho, model, 2.0, TimeGrid(1.0, 33))
        assert np.all(np.diff(s.Lambda) <= 0)
        assert np.max(s.certificate) <= 1e-10
        assert np.all(np.diff(s.envelope) <= 1e-12)

    def test_step_halving(self, static_case):
        g, rho, model = static_case
        ends = [schedule_lambda_admissible(g, rho, model, 2.0, TimeGrid(1.0, 33), substeps=m).Lambda[-1]
                for m in (4, 8, 16)]
        assert abs(ends[1] - ends[0]) <= 1e-8 * ends[1]
        assert abs(ends[2] - ends[1]) <= 1e-8 * ends[2]

    def test_undelayed_variant_matches_closed_form(self, static_case):
        g, rho, model = static_case
        s = schedule_lambda_admissible(g, rho, model, 2.0, TimeGrid(1.0, 33), substeps=16, lag=0)
        assert np.allclose(s.Lambda, s.bound.exact(2.0, s.times), rtol=1e-10)

    def test_constant_h_keeps_level(self, static_case):
        g, rho, _ = static_case
        s = schedule_lambda_admissible(g, rho, make_power_law(2.0, h=[0.3, 0.1]), 2.0,
                                       TimeGrid(1.0, 17))
        assert np.all(s.Lambda == 2.0)
        assert np.all(s.dLambda == 0.0)

    def test_depletion(self, static_case):
        g, rho, _ = static_case
        steep = make_power_law(2.0, h={"direction": [5.0, 5.0], "exponent": 3.0})
        with pytest.raises(LambdaDepleted):
            schedule_lambda_admissible(g, rho, steep, 0.5, TimeGrid(1.0, 17))
        with pytest.raises(LambdaDepleted):
            schedule_lambda_admissible(g, rho, steep, 0.0, TimeGrid(1.0, 17))


class TestEnergy:
    def test_energy_of_uniform_state(self):
        g = Grid(2, 16)
        rho = np.full(g.shape, 2.0)
        u = g.constant_vector([1.0, -1.0])
        E, total = energy_field(g, rho, u, make_power_law(2.0, h=[0.5, 0.0]))
        assert np.allclose(E, 0.5 * 2.0 * (1.5**2 + 1.0))
        assert np.isclose(total, 4.0 * 3.25)


class TestAssembly:
    def test_theorem1_two_mode(self):
        g = Grid(2, 32)
        model = make_power_law(2.0, h={"direction": [0.5, 0.25], "exponent": 1.0})
        data = DataPair(g, *make_scenario("two-mode-transfer", g, model))
        b = assemble_subsolution(data, model, TimeGrid(1.0, 33), eta=1.0)
        assert np.isclose(b.membership.margin, 1.0, atol=1e-12)
        assert b.membership_with(0.5 * b.Lambda).margin < 0
        assert np.allclose(b.momentum(0), data.rho0 * data.u0, atol=1e-12)
        assert np.allclose(b.momentum(-1), data.rhoT * data.uT, atol=1e-8)

    def test_trivial_data_gives_margin_eta(self):
        g = Grid(2, 16)
        rho = np.full(g.shape, 1.5)
        zero = np.zeros((2,) + g.shape)
        b = assemble_subsolution(DataPair(g, rho, zero, rho, zero), make_power_law(2.0),
                                 TimeGrid(1.0, 5), eta=0.3)
        assert b.membership.margin == 0.3
        assert np.all(b.lam == 0.0) and np.all(b.rate == 0.0)

    def test_admissible_requires_static_density(self):
        g = Grid(2, 32)
        model = make_power_law(2.0, h={"direction": [0.5, 0.25], "exponent": 1.0})
        data = DataPair(g, *make_scenario("two-mode-transfer", g, model))
        with pytest.raises(AwRascleError) as ei:
            assemble_subsolution(data, model, TimeGrid(1.0, 33), mode="admissible")
        assert ei.value.condition == "c27 static density ansatz"
        assert ei.value.stage == "schedule"

    def test_incompatible_data_stops_early(self):
        g = Grid(2, 16)
        model = make_power_law(2.0)
        data = DataPair(g, *make_scenario("incompatible-demo", g, model))
        with pytest.raises(IncompatibleMass) as ei:
            assemble_subsolution(data, model, TimeGrid(1.0, 9))
        assert ei.value.stage == "compatibility"
        assert ei.value.condition == "cc1 mass compatibility"
