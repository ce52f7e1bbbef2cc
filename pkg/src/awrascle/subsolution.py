"""Affine subsolution, energy level schedules and the lambda_max membership test."""
from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import PchipInterpolator

from .drift import DataPair, MeanDrift, build_mean_drift, check_compatibility
from .elliptic import build_F, build_M, build_N
from .errors import (AwRascleError, EndpointMismatch, IncompatibleMass, LambdaDepleted,
                     NotTraceless, PositivityFailure)
from .models import ModelFunctions
from .parallel import pmap
from .profile import DensityProfileBundle, TimeGrid, build_profile
from .torus import Grid, SymTensor0

# --------------------------------------------------------------------------- #
# largest eigenvalue of small symmetric matrices
# --------------------------------------------------------------------------- #


def _lmax2(a, b, c):
    return 0.5 * (a + c) + np.hypot(0.5 * (a - c), b)


def _unit(x):
    nrm = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / np.where(nrm == 0.0, 1.0, nrm)


def _det3(M):
    # cofactor expansion; unlike an LU-based det it stays quiet on subnormal input
    return (M[..., 0, 0] * (M[..., 1, 1] * M[..., 2, 2] - M[..., 1, 2] * M[..., 2, 1])
            - M[..., 0, 1] * (M[..., 1, 0] * M[..., 2, 2] - M[..., 1, 2] * M[..., 2, 0])
            + M[..., 0, 2] * (M[..., 1, 0] * M[..., 2, 1] - M[..., 1, 1] * M[..., 2, 0]))


def _lmax3(A):
    q = np.trace(A, axis1=-2, axis2=-1) / 3.0
    eye = np.eye(3)
    B = A - q[..., None, None] * eye
    p = np.sqrt(np.sum(B * B, axis=(-2, -1)) / 6.0)
    flat = p == 0.0
    ps = np.where(flat, 1.0, p)
    r = np.clip(_det3(B / ps[..., None, None]) / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    top = q + 2.0 * ps * np.cos(phi)
    neg = r < 0.0
    if np.any(neg):
        # The largest root is ill-conditioned in the trigonometric form when
        # r -> -1; the smallest one is isolated there, so deflate it instead.
        An, qn, pn, phin = A[neg], q[neg], ps[neg], phi[neg]
        lmin = qn + 2.0 * pn * np.cos(phin + 2.0 * np.pi / 3.0)
        C = An - lmin[:, None, None] * eye
        cands = np.stack([np.cross(C[:, 0], C[:, 1]), np.cross(C[:, 0], C[:, 2]),
                          np.cross(C[:, 1], C[:, 2])], axis=1)
        pick = np.argmax(np.linalg.norm(cands, axis=-1), axis=1)
        e = _unit(cands[np.arange(len(pick)), pick])
        axis = eye[np.argmin(np.abs(e), axis=-1)]
        u1 = _unit(np.cross(e, axis))
        u2 = np.cross(e, u1)
        a = np.einsum("ni,nij,nj->n", u1, An, u1)
        b = np.einsum("ni,nij,nj->n", u1, An, u2)
        c = np.einsum("ni,nij,nj->n", u2, An, u2)
        top = top.copy()
        top[neg] = _lmax2(a, b, c)
    return np.where(flat, q, top)


def lambda_max(A) -> np.ndarray:
    """Largest eigenvalue of symmetric ``(..., d, d)`` matrices, d in {1, 2, 3}.

    Closed forms: the quadratic formula for d = 2, trigonometric Cardano for
    d = 3 (with deflation of the isolated smallest root when needed).
    """
    A = np.asarray(A, dtype=float)
    d = A.shape[-1]
    A = 0.5 * (A + np.swapaxes(A, -1, -2))
    if d == 1:
        return A[..., 0, 0].copy()
    if d == 2:
        return _lmax2(A[..., 0, 0], A[..., 0, 1], A[..., 1, 1])
    if d == 3:
        shape = A.shape[:-2]
        return _lmax3(A.reshape(-1, 3, 3)).reshape(shape)
    raise ValueError("lambda_max supports d <= 3, got %d" % d)


def pointwise_slack(w, B, tol_trace: float = 1e-12) -> np.ndarray:
    """``d lambda_max[w (x) w - B] - |w|^2 / 2`` for batches ``w (..., d)``, ``B (..., d, d)``."""
    w = np.asarray(w, dtype=float)
    B = np.asarray(B, dtype=float)
    d = w.shape[-1]
    tr = np.trace(B, axis1=-2, axis2=-1)
    scale = np.maximum(np.max(np.abs(B), axis=(-2, -1)), 1.0)
    if np.any(np.abs(tr) > tol_trace * scale):
        raise NotTraceless("trace(B) = %.3e is not zero" % float(np.max(np.abs(tr))))
    ww = w[..., :, None] * w[..., None, :]
    return d * lambda_max(ww - B) - 0.5 * np.sum(w * w, axis=-1)


def check_pointwise_inequality(w, B) -> float:
    """Slack of ``|w|^2 / 2 <= d lambda_max[w (x) w - B]`` for traceless symmetric ``B``."""
    return float(pointwise_slack(w, B))


# --------------------------------------------------------------------------- #
# membership ingredients
# --------------------------------------------------------------------------- #


def _bcast(V, d):
    return np.asarray(V, dtype=float).reshape((d,) + (1,) * d)


def membership_matrix(grid: Grid, rho, phi, V, v, F: SymTensor0, M: SymTensor0,
                      N: SymTensor0) -> np.ndarray:
    """``K = m (x) m / rho - F + M + N[v]`` with ``m = v + V + grad phi``; shape ``(d, d, ...)``."""
    m = v + _bcast(V, grid.d) + grid.grad(phi)
    return m[:, None] * m[None, :] / rho + (M + N - F).full()


def lambda_field(K: np.ndarray) -> np.ndarray:
    return lambda_max(np.moveaxis(K, (0, 1), (-2, -1)))


def potential_rate(model: ModelFunctions, rho, drho, dphi) -> np.ndarray:
    """``d_t(phi + P(rho)) = d_t phi + P'(rho) d_t rho``."""
    return dphi + model.dP(rho) * drho


def kinetic_level(Lambda: float, d: int, rate) -> np.ndarray:
    """``e = Lambda - (d/2) d_t(phi + P(rho))``."""
    return Lambda - 0.5 * d * rate


@dataclass
class MembershipReport:
    times: list
    node_minima: list
    margin: float
    tau: float
    window: list

    @property
    def passed(self) -> bool:
        return self.margin > 0.0

    def as_dict(self) -> dict:
        return {"times": list(self.times), "node_minima": list(self.node_minima),
                "margin": self.margin, "tau": self.tau, "window": list(self.window),
                "pass": self.passed}


def membership_from_fields(times, lam, rate, Lambda, d: int, tau: float = 0.0) -> MembershipReport:
    """Per-node ``min_x e - (d/2) lambda_max[K]`` and the minimum over ``t > tau``.

    ``tau = 0`` checks every node including ``t = 0``.
    """
    times = np.asarray(times, dtype=float)
    mins = [float(np.min(kinetic_level(L, d, r) - 0.5 * d * l))
            for L, r, l in zip(Lambda, rate, lam)]
    keep = times > tau if tau > 0 else np.ones(len(times), bool)
    if not np.any(keep):
        raise AwRascleError("membership window (%g, T] holds no time node" % tau)
    margin = float(min(m for m, k in zip(mins, keep) if k))
    return MembershipReport([float(t) for t in times], mins, margin, float(tau),
                            [float(times[keep][0]), float(times[-1])])


def schedule_lambda_theorem1(lam, rate, d: int, eta: float) -> np.ndarray:
    """``Lambda_k = max_x[(d/2) lambda_max K + (d/2) d_t(phi + P)] + eta``."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    return np.array([float(np.max(0.5 * d * l + 0.5 * d * r)) + eta for l, r in zip(lam, rate)])


def monotone_interpolant(times, Lambda) -> PchipInterpolator:
    return PchipInterpolator(np.asarray(times, float), np.asarray(Lambda, float))


# --------------------------------------------------------------------------- #
# admissible (energy non-increasing) schedule for a static density
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class AdmissibleBound:
    """``BOUND(L) = |T^d| rho_max G (a sqrt(L) + A) a sqrt(L)``, ``a = sqrt(2 / rho_min)``.

    ``G = sup |grad h(rho_0)|`` (Frobenius) and ``A = sup |h + grad p|``.
    """

    volume: float
    rho_min: float
    rho_max: float
    grad_h: float
    offset: float

    @property
    def alpha(self) -> float:
        return float(np.sqrt(2.0 / self.rho_min))

    def __call__(self, Lam):
        s = self.alpha * np.sqrt(np.maximum(Lam, 0.0))
        return self.volume * self.rho_max * self.grad_h * (s + self.offset) * s

    def rate(self, Lam):
        return -(2.0 / self.volume) * self(Lam)

    def exact(self, Lambda0: float, t):
        """Closed-form solution of ``L' = rate(L)`` (no delay).

        ``s = sqrt(L)`` obeys ``s' = -c (a^2 s + A a)`` with ``c = rho_max G``.
        """
        c, a, A = self.rho_max * self.grad_h, self.alpha, self.offset
        t = np.asarray(t, dtype=float)
        if c == 0.0:
            return np.full_like(t, Lambda0)
        s = (np.sqrt(Lambda0) + A / a) * np.exp(-c * a * a * t) - A / a
        return np.where(s > 0, s, 0.0) ** 2


def admissible_bound(grid: Grid, rho0, model: ModelFunctions) -> AdmissibleBound:
    grad_rho = grid.grad(rho0)
    G = model.grad_h(grid, rho0, grad_rho)
    gh = float(np.max(np.sqrt(np.sum(G * G, axis=(0, 1)))))
    off = model.offset(grid, rho0, grad_rho)
    A = float(np.max(np.sqrt(np.sum(off * off, axis=0))))
    return AdmissibleBound(grid.volume, float(np.min(rho0)), float(np.max(rho0)), gh, A)


@dataclass
class AdmissibleSchedule:
    times: np.ndarray
    Lambda: np.ndarray
    dLambda: np.ndarray
    bound: AdmissibleBound
    certificate: np.ndarray     # (|T|/2) dL/dt + BOUND(L_k) per step; must be <= 0
    envelope: np.ndarray        # certified upper energy envelope, relative to t = 0
    lag: int
    substeps: int


def _rk4(f, y, h):
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0


def schedule_lambda_admissible(grid: Grid, rho0, model: ModelFunctions, Lambda0: float,
                               timegrid: TimeGrid, substeps: int = 8,
                               lag: int = 1) -> AdmissibleSchedule:
    """Non-increasing energy level for the static-density ansatz.

    Integrates ``L'(t) = -(2/|T^d|) BOUND(L(t - lag dt))`` with history
    ``L = L(0)`` for ``t <= 0``, where ``dt`` is the node spacing. With
    ``lag >= 1`` the discrete certificate
    ``(|T^d|/2)(L_{k+1} - L_k)/dt + BOUND(L_k) <= 0`` holds at every node step
    because ``BOUND`` is increasing and ``L`` non-increasing. ``lag = 0`` is the
    undelayed equation (classical RK4). Each node step uses ``substeps``
    fourth-order steps: Simpson over the already known past, with midpoints
    from cubic Hermite interpolation.
    """
    if Lambda0 <= 0:
        raise LambdaDepleted("initial energy level must be positive, got %g" % Lambda0)
    bound = admissible_bound(grid, rho0, model)
    times = timegrid.times
    dt = timegrid.dt
    m = int(substeps)
    tau = dt / m
    nf = (len(times) - 1) * m
    L = np.empty(nf + 1)
    L[0] = Lambda0
    f = bound.rate

    if lag == 0:
        for j in range(nf):
            L[j + 1] = _rk4(f, L[j], tau)
            if L[j + 1] <= 0:
                raise LambdaDepleted("energy level exhausted at t = %.6g" % ((j + 1) * tau))
        D = f(L)
    else:
        lf = int(lag) * m
        f0 = f(Lambda0)
        D = np.empty(nf + 1)   # L'(s_j) = f(L(s_j - lag dt))
        for j in range(nf + 1):
            i = j - lf
            D[j] = f0 if i <= 0 else f(L[i])
            if j == nf:
                break
            if i < 0:
                inc = tau * f0
            else:
                Li, Lk = L[i], L[i + 1]
                mid = 0.5 * (Li + Lk) + tau * (D[i] - D[i + 1]) / 8.0
                inc = tau * (f(Li) + 4.0 * f(mid) + f(Lk)) / 6.0
            L[j + 1] = L[j] + inc
            if L[j + 1] <= 0:
                raise LambdaDepleted("energy level exhausted at t = %.6g" % ((j + 1) * tau))

    Ln = L[::m].copy()
    dLn = D[::m].copy()
    B = bound(Ln)
    cert = 0.5 * grid.volume * np.diff(Ln) / dt + B[:-1]
    env = 0.5 * grid.volume * (Ln - Ln[0]) + np.concatenate([[0.0], np.cumsum(dt * B[:-1])])
    return AdmissibleSchedule(times, Ln, dLn, bound, cert, env, int(lag), m)


def energy_field(grid: Grid, rho, u, model: ModelFunctions):
    """``E = rho |u + h(rho) + grad p(rho)|^2 / 2`` and its integral."""
    a = u + model.offset(grid, rho)
    E = 0.5 * rho * np.sum(a * a, axis=0)
    return E, float(grid.integrate(E))


# --------------------------------------------------------------------------- #
# assembly
# --------------------------------------------------------------------------- #


@dataclass
class SubsolutionBundle:
    grid: Grid
    model: ModelFunctions
    data: DataPair
    profile: DensityProfileBundle
    drift: MeanDrift
    v0: np.ndarray
    vT: np.ndarray
    F: SymTensor0
    v: np.ndarray               # (n_t, d, ...)
    M: list
    N: list
    lam: np.ndarray             # lambda_max[K] per node, (n_t, ...)
    rate: np.ndarray            # d_t(phi + P(rho)) per node, (n_t, ...)
    Lambda: np.ndarray
    dLambda: np.ndarray
    mode: str
    eta: float
    membership: MembershipReport
    admissible: Optional[AdmissibleSchedule] = None
    compatibility: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.profile.times

    def e_field(self, k: int) -> np.ndarray:
        return kinetic_level(self.Lambda[k], self.grid.d, self.rate[k])

    def momentum(self, k: int) -> np.ndarray:
        """``rho u = v + V + grad phi`` at node ``k``."""
        return (self.v[k] + _bcast(self.drift.V[k], self.grid.d)
                + self.grid.grad(self.profile.phi[k]))

    def membership_with(self, Lambda, tau: float = 0.0) -> MembershipReport:
        return membership_from_fields(self.times, self.lam, self.rate, Lambda, self.grid.d, tau)


def affine_path(v0, vT, times, T):
    s = (np.asarray(times, float) / T)[(slice(None),) + (None,) * np.ndim(v0)]
    out = (1.0 - s) * v0[None] + s * vT[None]
    out[0], out[-1] = v0, vT
    return out


@contextmanager
def stage(name: str):
    """Tag library errors raised inside the block with a pipeline stage name."""
    try:
        yield
    except AwRascleError as exc:
        if getattr(exc, "stage", None) is None:
            exc.stage = name
        raise


def assemble_subsolution(data: DataPair, model: ModelFunctions, timegrid: TimeGrid,
                         eta: float = 1.0, mode: str = "theorem1", lambda0: float = None,
                         delta0: float = None, s0: float = None, sT: float = None,
                         theta: float = 0.05, tau: float = 0.0, tol: dict = None,
                         substeps: int = 8, lag: int = 1, force: bool = False,
                         threads: int = 1) -> SubsolutionBundle:
    """End-to-end construction of the affine subsolution and its energy level."""
    tol = dict(tol or {})
    g = data.grid
    d = g.d
    T = timegrid.T
    with stage("compatibility"):
        comp = check_compatibility(data, model, tol.get("mass", 1e-10), tol.get("momentum", 1e-8))
        if not force:
            if not comp.positivity_pass:
                raise PositivityFailure("data density must have a positive infimum "
                                        "(inf rho_0 = %.3e, inf rho_T = %.3e)"
                                        % (comp.inf_rho0, comp.inf_rhoT),
                                        condition="cc1 positive infimum")
            if not comp.mass_pass:
                raise IncompatibleMass("total masses differ by %.3e" % comp.mass_defect)
            if not comp.momentum_pass:
                raise EndpointMismatch("momentum balance defect %s" % comp.momentum_defect,
                                       condition="cc2 momentum compatibility")
        model.check_domain(data.rho0)
        model.check_domain(data.rhoT)

    with stage("helmholtz"):
        v0, V0, phi0 = data.start
        vT, VT, phiT = data.end
    with stage("profile"):
        profile = build_profile(g, data.rho0, data.rhoT, phi0, phiT, timegrid, delta0=delta0,
                                s0=s0, sT=sT, theta=theta, tol_mass=tol.get("mass", 1e-10),
                                threads=threads)
        model.check_domain(profile.rho)
    with stage("mean-drift"):
        drift = build_mean_drift(profile, model, V0, None if force else VT,
                                 tol=tol.get("drift", 1e-8))
    with stage("elliptic"):
        F = build_F(g, v0, vT, T)
        v = affine_path(v0, vT, profile.times, T)

        def node(k):
            rho, drho, phi = profile.rho[k], profile.drho[k], profile.phi[k]
            M = build_M(g, model, rho, drho, phi, drift.V[k])
            N = build_N(g, model, rho, v[k])
            K = membership_matrix(g, rho, phi, drift.V[k], v[k], F, M, N)
            return M, N, lambda_field(K), potential_rate(model, rho, drho, profile.dphi[k])

        parts = pmap(node, range(len(profile.times)), threads)
    M = [p[0] for p in parts]
    N = [p[1] for p in parts]
    lam = np.stack([p[2] for p in parts])
    rate = np.stack([p[3] for p in parts])

    adm = None
    with stage("schedule"):
        if mode == "theorem1":
            Lambda = schedule_lambda_theorem1(lam, rate, d, eta)
            dLambda = monotone_interpolant(profile.times, Lambda).derivative()(profile.times)
        elif mode == "admissible":
            _require_static(data, V0, phi0, phiT)
            L0 = (lambda0 if lambda0 is not None
                  else schedule_lambda_theorem1(lam[:1], rate[:1], d, eta)[0])
            adm = schedule_lambda_admissible(g, data.rho0, model, L0, timegrid, substeps, lag)
            Lambda, dLambda = adm.Lambda, adm.dLambda
        else:
            raise ValueError("unknown schedule mode %r" % mode)

    memb = membership_from_fields(profile.times, lam, rate, Lambda, d, tau)
    return SubsolutionBundle(g, model, data, profile, drift, v0, vT, F, v, M, N, lam, rate,
                             np.asarray(Lambda, float), np.asarray(dLambda, float), mode,
                             float(eta), memb, adm, comp.as_dict())


def _require_static(data: DataPair, V0, phi0, phiT, tol: float = 1e-12):
    same = np.max(np.abs(data.rho0 - data.rhoT)) <= tol * np.max(np.abs(data.rho0))
    flat = (np.max(np.abs(V0)) <= tol and np.max(np.abs(phi0)) <= tol
            and np.max(np.abs(phiT)) <= tol)
    if not (same and flat):
        raise AwRascleError("the admissible schedule needs rho_T = rho_0, V = 0 and phi = 0",
                            condition="c27 static density ansatz")
