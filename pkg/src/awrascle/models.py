"""Velocity-offset models and the change-of-variables identities.

A model fixes the offset ``w - u = h(rho) + grad p(rho)``: a vector function
``h`` of the density plus the gradient of a scalar ``p``. Derived potentials:

* ``P`` with ``P'(rho) = rho p'(rho)``, so that ``grad P(rho) = rho grad p(rho)``
* ``Q`` with ``Q'(rho) = rho p'(rho)`` (same derivative, kept as its own
  callback because it plays a different role in the viscous reformulation)
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import integrate, interpolate

from .errors import ContinuityViolated, DomainViolation
from .torus import Grid


def _antiderivative(fn: Callable, ref: float) -> Callable:
    """``F(r) = int_ref^r fn`` by adaptive quadrature, vectorised over r."""

    def scalar(r):
        val, _ = integrate.quad(fn, ref, r, epsabs=1e-12, epsrel=1e-12, limit=200)
        return val

    def F(rho):
        rho = np.asarray(rho, dtype=float)
        uniq, inv = np.unique(rho, return_inverse=True)
        vals = np.array([scalar(r) for r in uniq])
        return vals[inv].reshape(rho.shape)

    return F


def make_offset_h(spec, d: int):
    """Build ``(h, dh)`` from a config spec.

    ``"zero"`` / None, a constant vector ``[c1, ..., cd]``, or
    ``{"direction": [c1, ..., cd], "exponent": a}`` meaning ``h = c * rho**a``.
    """
    if spec is None or spec == "zero":
        c, a = np.zeros(d), 0.0
    elif isinstance(spec, dict):
        c = np.asarray(spec["direction"], dtype=float)
        a = float(spec.get("exponent", 1.0))
    else:
        c, a = np.asarray(spec, dtype=float), 0.0
    if c.shape != (d,):
        raise ValueError("h direction must have %d components" % d)

    def _bc(rho):
        rho = np.asarray(rho, dtype=float)
        return c.reshape((d,) + (1,) * rho.ndim), rho

    def h(rho):
        cc, rho = _bc(rho)
        return cc * rho**a if a else cc * np.ones_like(rho)

    def dh(rho):
        cc, rho = _bc(rho)
        return cc * (a * rho ** (a - 1.0)) if a else cc * np.zeros_like(rho)

    return h, dh, bool(np.any(c)) and a != 0.0


@dataclass
class ModelFunctions:
    """The offset pair (h, p) with derivatives and derived potentials.

    ``domain`` is the open interval of validity; ``guard`` is the upper
    limit actually accepted by :meth:`check_domain` (below ``domain[1]`` for
    singular families).
    """

    d: int
    h: Callable
    dh: Callable
    p: Callable
    dp: Callable
    d2p: Callable
    P: Callable
    dP: Callable
    Q: Callable
    dQ: Callable
    domain: tuple = (0.0, np.inf)
    guard: float = np.inf
    name: str = "custom"
    h_varies: bool = False
    mu: Optional[Callable] = None
    dmu: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def check_domain(self, rho) -> None:
        rho = np.asarray(rho)
        lo, hi = self.domain
        if np.any(rho <= lo) or np.any(rho >= self.guard):
            raise DomainViolation(
                "density range [%.6g, %.6g] leaves the admissible interval (%g, %g) of model %s"
                % (float(np.min(rho)), float(np.max(rho)), lo, min(hi, self.guard), self.name))

    def rho_h(self, rho):
        return rho * self.h(rho)

    def d_rho_h(self, rho):
        """Derivative of ``rho h(rho)``: ``h + rho h'``."""
        return self.h(rho) + rho * self.dh(rho)

    def grad_p(self, grid: Grid, rho, grad_rho=None):
        if grad_rho is None:
            grad_rho = grid.grad(rho)
        return self.dp(rho) * grad_rho

    def offset(self, grid: Grid, rho, grad_rho=None):
        """``h(rho) + grad p(rho)`` as a vector field."""
        return self.h(rho) + self.grad_p(grid, rho, grad_rho)

    def viscosity(self):
        """``(mu, mu')`` with ``mu = rho^2 p'(rho)``, the 1D Navier-Stokes viscosity."""
        if self.mu is not None:
            return self.mu, self.dmu
        return (lambda r: r * r * self.dp(r),
                lambda r: 2.0 * r * self.dp(r) + r * r * self.d2p(r))

    def grad_h(self, grid: Grid, rho, grad_rho=None):
        """``G[i, j] = d_i h_j(rho) = h_j'(rho) d_i rho``."""
        if grad_rho is None:
            grad_rho = grid.grad(rho)
        return grad_rho[:, None] * self.dh(rho)[None, :]


def make_power_law(gamma: float, d: int = 2, h=None) -> ModelFunctions:
    """Power-law offset ``p = rho**gamma`` with ``P = gamma rho^(gamma+1)/(gamma+1)``."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    g = float(gamma)
    hf, dhf, varies = make_offset_h(h, d)

    def P(rho):
        return g * np.asarray(rho, dtype=float) ** (g + 1.0) / (g + 1.0)

    def dP(rho):
        return g * np.asarray(rho, dtype=float) ** g

    return ModelFunctions(
        d=d, h=hf, dh=dhf,
        p=lambda r: np.asarray(r, dtype=float) ** g,
        dp=lambda r: g * np.asarray(r, dtype=float) ** (g - 1.0),
        d2p=lambda r: g * (g - 1.0) * np.asarray(r, dtype=float) ** (g - 2.0),
        P=P, dP=dP, Q=P, dQ=dP,
        name="power(gamma=%g)" % g, h_varies=varies,
        params={"family": "power", "gamma": g},
    )


def make_singular_cost(gamma: float, rho_bar: float, d: int = 2, h=None,
                       margin: float = 1e-3) -> ModelFunctions:
    """Offset ``p = (1/rho - 1/rho_bar)**(-gamma)`` on ``(0, rho_bar)``.

    Evaluation is refused at ``rho >= rho_bar (1 - margin)``. ``P`` has no
    closed form and is integrated from ``rho_bar / 2``.
    """
    if gamma <= 0 or rho_bar <= 0:
        raise ValueError("gamma and rho_bar must be positive")
    g, rb = float(gamma), float(rho_bar)
    guard = rb * (1.0 - margin)
    hf, dhf, varies = make_offset_h(h, d)

    def _s(rho):
        rho = np.asarray(rho, dtype=float)
        if np.any(rho <= 0) or np.any(rho >= guard):
            raise DomainViolation("singular cost evaluated at density outside (0, %g)" % guard)
        return rho, 1.0 / rho - 1.0 / rb

    def p(rho):
        rho = np.asarray(rho, dtype=float)
        out = np.zeros_like(rho)
        pos = rho > 0
        if np.any(rho < 0) or np.any(rho >= guard):
            raise DomainViolation("singular cost evaluated at density outside (0, %g)" % guard)
        r = rho[pos]
        out[pos] = (1.0 / r - 1.0 / rb) ** (-g)
        return out

    def dp(rho):
        rho, s = _s(rho)
        return g * s ** (-g - 1.0) / rho**2

    def d2p(rho):
        rho, s = _s(rho)
        return g * ((g + 1.0) * s ** (-g - 2.0) / rho**4 - 2.0 * s ** (-g - 1.0) / rho**3)

    def dP(rho):
        rho, s = _s(rho)
        return g * s ** (-g - 1.0) / rho

    P = _antiderivative(lambda r: float(dP(r)), 0.5 * rb)
    return ModelFunctions(
        d=d, h=hf, dh=dhf, p=p, dp=dp, d2p=d2p, P=P, dP=dP, Q=P, dQ=dP,
        domain=(0.0, rb), guard=guard,
        name="singular(gamma=%g, rho_bar=%g)" % (g, rb), h_varies=varies,
        params={"family": "singular", "gamma": g, "rho_bar": rb, "margin": margin},
    )


def load_table(path, d: int):
    """Read ``rho, p, p', h_1..h_d`` columns from CSV (header row optional)."""
    rows = []
    with open(Path(path), newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append([float(x) for x in row])
            except ValueError:
                if rows:
                    raise
    return _check_table(rows, d)


def _check_table(rows, d: int) -> np.ndarray:
    table = np.asarray(rows, dtype=float)
    if table.ndim != 2 or table.shape[1] != 3 + d or table.shape[0] < 4:
        raise ValueError("table needs >= 4 rows of %d columns (rho, p, p', h_1..h_%d)" % (3 + d, d))
    return table


def make_table_model(table, d: int = 2) -> ModelFunctions:
    """Tabulated model with cubic-spline interpolation of every column."""
    table = _check_table(table, d) if isinstance(table, (np.ndarray, list)) else load_table(table, d)
    order = np.argsort(table[:, 0])
    table = table[order]
    rho = table[:, 0]
    p_s = interpolate.CubicSpline(rho, table[:, 1])
    dp_s = interpolate.CubicSpline(rho, table[:, 2])
    d2p_s = dp_s.derivative()
    h_s = [interpolate.CubicSpline(rho, table[:, 3 + i]) for i in range(d)]
    dh_s = [s.derivative() for s in h_s]
    lo, hi = float(rho[0]), float(rho[-1])

    def _chk(r):
        r = np.asarray(r, dtype=float)
        if np.any(r < lo) or np.any(r > hi):
            raise DomainViolation("density outside tabulated range [%g, %g]" % (lo, hi))
        return r

    def dP(r):
        r = _chk(r)
        return r * dp_s(r)

    P = _antiderivative(lambda r: float(dP(r)), 0.5 * (lo + hi))
    model = ModelFunctions(
        d=d,
        h=lambda r: np.stack([s(_chk(r)) for s in h_s]),
        dh=lambda r: np.stack([s(_chk(r)) for s in dh_s]),
        p=lambda r: p_s(_chk(r)), dp=lambda r: dp_s(_chk(r)), d2p=lambda r: d2p_s(_chk(r)),
        P=P, dP=dP, Q=P, dQ=dP,
        domain=(lo, hi), name="table", h_varies=True,
        params={"family": "custom-table"},
    )
    # table ends are closed; domain check uses the open interval slightly widened
    model.domain = (lo - 1e-300, hi)
    model.guard = hi * (1 + 1e-15)
    return model


def model_from_config(cfg: dict, d: int) -> ModelFunctions:
    family = cfg.get("family", "power")
    h = cfg.get("h", "zero")
    if family == "power":
        return make_power_law(cfg.get("gamma", 1.0), d, h)
    if family == "singular":
        return make_singular_cost(cfg["gamma"], cfg["rho_bar"], d, h, cfg.get("margin", 1e-3))
    if family == "custom-table":
        return make_table_model(cfg["table"], d)
    raise ValueError("unknown model family %r" % (family,))


# ---------------------------------------------------------------------------
# derivative checks
# ---------------------------------------------------------------------------
def derivative_errors(model: ModelFunctions, samples, step: float = 1e-5) -> dict:
    """Max relative central-difference error of each supplied derivative."""
    r = np.asarray(samples, dtype=float)

    def rel(fd, exact):
        return float(np.max(np.abs(fd - exact) / np.maximum(np.abs(exact), 1.0)))

    c = 2.0 * step
    out = {
        "dp": rel((model.p(r + step) - model.p(r - step)) / c, model.dp(r)),
        "d2p": rel((model.dp(r + step) - model.dp(r - step)) / c, model.d2p(r)),
        "dh": rel((model.h(r + step) - model.h(r - step)) / c, model.dh(r)),
        "dP": rel((model.P(r + step) - model.P(r - step)) / c, model.dP(r)),
    }
    exact = r * model.dp(r)
    out["dP_identity"] = float(np.max(np.abs(model.dP(r) - exact) / np.maximum(np.abs(exact), 1e-300)))
    out["dQ_vs_dP"] = float(np.max(np.abs(model.dQ(r) - model.dP(r))))
    return out


# ---------------------------------------------------------------------------
# 1D: Aw-Rascle with gradient offset vs pressureless Navier-Stokes
# ---------------------------------------------------------------------------
def _line_dx(f: np.ndarray) -> np.ndarray:
    n = f.shape[-1]
    k = np.pi * np.fft.rfftfreq(n, 1.0 / n)
    if n % 2 == 0:
        k[-1] = 0.0
    return np.fft.irfft(1j * k * np.fft.rfft(f), n=n)


def _line_dealias(f: np.ndarray) -> np.ndarray:
    n = f.shape[-1]
    m = np.fft.rfftfreq(n, 1.0 / n)
    return np.fft.irfft(np.fft.rfft(f) * (3 * m < n), n=n)


def line_grid(n: int) -> np.ndarray:
    return -1.0 + 2.0 * np.arange(n) / n


@dataclass
class IdentityReport:
    discrepancy: float
    continuity_residual: float
    lhs_norm: float
    rhs_norm: float
    passed: bool

    def as_dict(self) -> dict:
        return {k: (bool(v) if isinstance(v, (bool, np.bool_)) else float(v))
                for k, v in self.__dict__.items()}


def _continuity_gate(res, scale, tol, strict):
    rel = float(np.max(np.abs(res))) / max(scale, 1e-300)
    if strict and rel > tol:
        raise ContinuityViolated("continuity residual %.3e exceeds %.1e; the identity only "
                                 "holds modulo the continuity equation" % (rel, tol))
    return float(np.max(np.abs(res)))


def check_1d_equivalence(rho, drho_dt, u, du_dt, mu: Callable, dmu: Callable,
                         tol: float = 1e-8, tol_continuity: float = 1e-8,
                         strict: bool = True) -> IdentityReport:
    """Compare the AR momentum residual with ``w = u + mu(rho)/rho^2 d_x rho``
    against the pressureless Navier-Stokes momentum residual at one instant.

    Fields are samples on the periodic line ``[-1, 1)``; time derivatives are
    supplied. ``strict=False`` skips the continuity gate (used to probe how
    the discrepancy follows an injected continuity defect).
    """
    rho, drho_dt, u, du_dt = (np.asarray(a, dtype=float) for a in (rho, drho_dt, u, du_dt))
    dx, da = _line_dx, _line_dealias
    flux = da(rho * u)
    cont = drho_dt + dx(flux)
    cont_max = _continuity_gate(cont, float(np.max(np.abs(drho_dt))) + float(np.max(np.abs(dx(flux)))),
                                tol_continuity, strict)

    rx = dx(rho)
    k_over = mu(rho) / rho                    # mu / rho
    dk_over = (dmu(rho) * rho - mu(rho)) / rho**2
    rho_w = rho * u + k_over * rx
    d_rho_w = drho_dt * u + rho * du_dt + dk_over * drho_dt * rx + k_over * dx(drho_dt)
    ar = d_rho_w + dx(da(rho_w * u))
    ns = drho_dt * u + rho * du_dt + dx(da(rho * u * u)) - dx(da(mu(rho) * dx(u)))
    disc = float(np.max(np.abs(ar - ns)))
    return IdentityReport(disc, cont_max, float(np.max(np.abs(ar))), float(np.max(np.abs(ns))),
                          disc <= tol)


def manufactured_1d(n: int = 256, amplitude: float = 0.3, t: float = 0.0,
                    defect: float = 0.0):
    """Smooth travelling density with a continuity-exact velocity.

    ``rho = 2 + A sin(pi x - t)``; ``rho u = A sin(pi x - t)/pi + 1``.
    ``defect`` adds ``defect * cos(2 pi x)`` to d_t rho (continuity then fails
    by exactly that amount).
    """
    x = line_grid(n)
    ph = np.pi * x - t
    rho = 2.0 + amplitude * np.sin(ph)
    drho = -amplitude * np.cos(ph)
    m = amplitude * np.sin(ph) / np.pi + 1.0
    dm = -amplitude * np.cos(ph) / np.pi
    u = m / rho
    du = (dm - u * drho) / rho
    drho = drho + defect * np.cos(2 * np.pi * x)
    return rho, drho, u, du


# ---------------------------------------------------------------------------
# d-D: viscous reformulation for h = 0
# ---------------------------------------------------------------------------
def check_viscous_form_identity(grid: Grid, rho, drho_dt, u, du_dt, model: ModelFunctions,
                                tol: float = 1e-8, tol_continuity: float = 1e-8,
                                strict: bool = True) -> IdentityReport:
    """Check ``d_t(rho w) + div(rho w (x) u)`` against
    ``d_t(rho u) + div(rho u (x) u) - grad(rho Q' div u) - L[grad Q, grad u]``
    with ``w = u + grad p(rho)`` and
    ``L_j = sum_i (d_i Q d_j u_i - d_j Q d_i u_i)``.
    """
    if model.h_varies or np.any(model.h(np.array([1.0]))):
        raise ValueError("the viscous reformulation assumes h = 0")
    d = grid.d
    flux = grid.product(rho, u)
    cont = drho_dt + grid.div(flux)
    cont_max = _continuity_gate(cont, float(np.max(np.abs(drho_dt))) + float(np.max(np.abs(grid.div(flux)))),
                                tol_continuity, strict)

    grad_rho = grid.grad(rho)
    w = u + model.grad_p(grid, rho, grad_rho)
    dt_grad_p = grid.grad(grid.product(model.dp(rho), drho_dt))
    dt_rho_w = drho_dt * w + rho * (du_dt + dt_grad_p)
    rwu = np.stack([np.stack([grid.product(rho, w[j], u[i]) for i in range(d)]) for j in range(d)])
    lhs = dt_rho_w + grid.div_tensor(rwu)

    ruu = np.stack([np.stack([grid.product(rho, u[j], u[i]) for i in range(d)]) for j in range(d)])
    div_u = grid.div(u)
    jac = grid.jacobian(u)                       # jac[i, j] = d_j u_i
    grad_q = model.dQ(rho) * grad_rho
    ell = np.einsum("i...,ij...->j...", grad_q, jac) - grad_q * div_u
    visc = grid.grad(grid.product(rho, model.dQ(rho), div_u))
    rhs = drho_dt * u + rho * du_dt + grid.div_tensor(ruu) - visc - ell
    disc = float(np.max(np.abs(lhs - rhs)))
    return IdentityReport(disc, cont_max, float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))),
                          disc <= tol)


def manufactured_viscous(grid: Grid, amplitude: float = 0.3):
    """Band-limited ``(rho, d_t rho, u, d_t u)`` with continuity exact by construction."""
    x = grid.coords
    rho = 2.0 + amplitude * np.sin(np.pi * x[0]) * np.cos(np.pi * x[1])
    u = np.zeros_like(x)
    u[0] = 0.5 * np.sin(np.pi * x[1])
    u[1] = 0.4 * np.cos(np.pi * x[0])
    du = np.zeros_like(x)
    du[0] = 0.1 * np.cos(np.pi * (x[0] + x[1]))
    du[1] = -0.2 * np.sin(np.pi * x[0])
    if grid.d == 3:
        u[2] = 0.3 * np.sin(np.pi * x[0])
        du[2] = 0.1 * np.cos(np.pi * x[2])
    drho = -grid.div(grid.product(rho, u))
    return rho, drho, u, du
