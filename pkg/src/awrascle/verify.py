"""Weak-form residuals, conserved quantities and energy monitoring.

Weak residuals of a balance law ``d_t q + div flux = 0`` are computed against
test functions ``phi(t, x) = b(t) exp(-i pi m . x)`` where ``b`` is a C^2 bump
supported in a time window and ``|m|_inf <= K``:

    R(b, m) = int b'(t) q_m(t) dt - i pi int b(t) sum_i m_i flux_m[..., i](t) dt,

with ``g_m = int g(x) exp(-i pi m . x) dx`` evaluated exactly by the FFT.
Time integrals use composite Gauss-Legendre on panels split at the shape
knots, so piecewise-polynomial time dependence is integrated exactly.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .models import ModelFunctions
from .torus import Grid


def bump(tau):
    """``64 tau^3 (1 - tau)^3`` on [0, 1], zero outside; C^2 with unit maximum."""
    tau = np.asarray(tau, dtype=float)
    inside = (tau > 0) & (tau < 1)
    return np.where(inside, 64.0 * tau**3 * (1 - tau) ** 3, 0.0)


def bump_d(tau):
    tau = np.asarray(tau, dtype=float)
    inside = (tau > 0) & (tau < 1)
    return np.where(inside, 192.0 * tau**2 * (1 - tau) ** 2 * (1 - 2 * tau), 0.0)


def default_windows(T: float) -> list:
    return [(0.0, T), (0.0, 0.5 * T), (0.5 * T, T)]


def gauss_panels(breaks, panels: int = 4, order: int = 8):
    """Nodes and weights of composite Gauss-Legendre over the sorted breakpoints."""
    x, w = np.polynomial.legendre.leggauss(order)
    ts, ws = [], []
    brk = np.unique(np.asarray(breaks, dtype=float))
    for a, b in zip(brk[:-1], brk[1:]):
        edges = np.linspace(a, b, panels + 1)
        for lo, hi in zip(edges[:-1], edges[1:]):
            ts.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
            ws.append(0.5 * (hi - lo) * w)
    return np.concatenate(ts), np.concatenate(ws)


def _mode_mask(grid: Grid, K: int) -> np.ndarray:
    return np.all(np.abs(grid.modes) <= K, axis=0)


def _coeff(grid: Grid, f) -> np.ndarray:
    """``int f exp(-i pi m . x) dx`` on the rfft half-spectrum."""
    return grid.fft(f) * (2.0 / grid.n) ** grid.d


@dataclass
class WeakResidual:
    max_abs: float
    rms: float
    scale: float
    count: int

    @property
    def relative(self) -> float:
        return self.max_abs / self.scale if self.scale > 0 else self.max_abs

    def as_dict(self) -> dict:
        d = asdict(self)
        d["relative"] = self.relative
        return d


def weak_residual(grid: Grid, q_fn, flux_fn, T: float, K: int = None, windows=None,
                  knots=(), panels: int = 4, order: int = 8) -> WeakResidual:
    """Weak residual of ``d_t q + div flux = 0``.

    ``q_fn(t)`` returns a scalar field or a vector field ``(d, ...)``;
    ``flux_fn(t)`` returns ``(d, ...)`` or ``(d, d, ...)`` respectively (row
    ``j`` of a tensor flux is the flux of component ``j``).
    """
    K = grid.n // 4 if K is None else K
    windows = default_windows(T) if windows is None else list(windows)
    breaks = [0.0, T] + [a for w in windows for a in w] + [k for k in knots if 0 < k < T]
    ts, ws = gauss_panels(breaks, panels, order)
    mask = _mode_mask(grid, K)
    kvec = np.pi * grid.modes
    acc = [0.0] * len(windows)
    ref = [0.0] * len(windows)
    for t, wt in zip(ts, ws):
        q = np.asarray(q_fn(t), dtype=float)
        fl = np.asarray(flux_fn(t), dtype=float)
        qh = _coeff(grid, q)
        fh = _coeff(grid, fl)
        divh = -1j * np.sum(kvec * fh, axis=-grid.d - 1)
        for j, (a, b) in enumerate(windows):
            if not (a < t < b):
                continue
            tau = (t - a) / (b - a)
            term_t = wt * float(bump_d(tau)) / (b - a) * qh
            term_x = wt * float(bump(tau)) * divh
            acc[j] = acc[j] + term_t + term_x
            ref[j] = ref[j] + np.abs(term_t) + np.abs(term_x)
    vals = np.concatenate([np.abs(np.asarray(r))[..., mask].ravel() for r in acc])
    scale = max(float(np.max(np.asarray(r)[..., mask])) for r in ref)
    return WeakResidual(float(np.max(vals)), float(np.sqrt(np.mean(vals**2))), scale, vals.size)


def weak_residual_continuity(grid: Grid, rho_fn, m_fn, T: float, K: int = None, **kw) -> WeakResidual:
    """Weak form of ``d_t rho + div(rho u) = 0`` given ``rho(t)`` and ``m(t) = rho u``."""
    return weak_residual(grid, rho_fn, m_fn, T, K, **kw)


def weak_residual_momentum(grid: Grid, q_fn, flux_fn, T: float, K: int = None, **kw) -> WeakResidual:
    """Weak form of a vector balance ``d_t q + div flux = 0``.

    For the Aw-Rascle momentum equation use ``q = rho w`` and
    ``flux = ar_momentum_flux(rho, u, w)``; for subsolutions ``q = v`` and
    ``flux = F`` (or the reformulated dyadic flux).
    """
    return weak_residual(grid, q_fn, flux_fn, T, K, **kw)


def ar_momentum_flux(rho, u, w) -> np.ndarray:
    """``rho w (x) u`` with rows indexed by the component of ``w``."""
    return rho * w[:, None] * u[None, :]


def odot(m) -> np.ndarray:
    """Trace-free dyad ``m (x) m - |m|^2 I / d``."""
    d = m.shape[0]
    out = m[:, None] * m[None, :]
    tr = np.sum(m * m, axis=0) / d
    for i in range(d):
        out[i, i] -= tr
    return out


def strong_continuity(grid: Grid, drho, m) -> float:
    """``max |d_t rho + div m| / max |d_t rho|`` at one instant (absolute if ``d_t rho = 0``)."""
    res = float(np.max(np.abs(drho + grid.div(m))))
    s = float(np.max(np.abs(drho)))
    return res / s if s > 0 else res


def offset_defect(grid: Grid, model: ModelFunctions, rho, u, w) -> float:
    return float(np.max(np.abs(w - u - model.offset(grid, rho))))


@dataclass
class ConservedReport:
    mass: list
    momentum: list
    mass_drift: float
    momentum_drift: float
    mass_drift_relative: float
    momentum_drift_relative: float

    def as_dict(self) -> dict:
        return asdict(self)


def conserved_quantities(grid: Grid, rho_series, rhow_series) -> ConservedReport:
    """Track ``int rho`` and ``int rho w`` over time nodes; drift is the max deviation from t = 0."""
    mass = np.array([float(grid.integrate(r)) for r in rho_series])
    mom = np.array([grid.integrate(q) for q in rhow_series])
    md = float(np.max(np.abs(mass - mass[0])))
    pd = float(np.max(np.abs(mom - mom[0])))
    pscale = max(float(np.max(np.abs(mom))), 1.0)
    return ConservedReport(mass.tolist(), mom.tolist(), md, pd, md / abs(mass[0]), pd / pscale)


@dataclass
class EnergyVerdict:
    times: list
    series: list
    tol_mono: float
    max_uptick: float
    worst_index: int
    passed: bool

    @property
    def worst_time(self):
        return self.times[self.worst_index] if self.worst_index >= 0 else None

    def as_dict(self) -> dict:
        d = asdict(self)
        d["worst_time"] = self.worst_time
        d["pass"] = d.pop("passed")
        return d


def energy_monitor(times, series, tol_mono: float = 1e-10) -> EnergyVerdict:
    """PASS iff ``E_{k+1} <= E_k + tol`` and ``E_k <= E_0 + tol`` for all k.

    ``max_uptick`` is the largest violation amount (or the least negative
    step when monotone); ``worst_index`` locates it (node of the larger value).
    """
    E = np.asarray(series, dtype=float)
    if len(E) < 2:
        return EnergyVerdict(list(map(float, times)), E.tolist(), tol_mono, 0.0, -1, True)
    steps = np.diff(E)
    from_start = E[1:] - E[0]
    up = np.maximum(steps, from_start)
    k = int(np.argmax(up))
    worst = float(up[k])
    return EnergyVerdict([float(t) for t in times], E.tolist(), float(tol_mono), worst, k + 1,
                         bool(worst <= tol_mono))


@dataclass
class VerificationReport:
    checks: dict = field(default_factory=dict)      # name -> {"value", "tol", "pass", ...}
    info: dict = field(default_factory=dict)

    def add(self, name: str, value: float, tol: float, condition: str, passed: bool = None, **extra):
        ok = bool(value <= tol) if passed is None else bool(passed)
        self.checks[name] = {"value": float(value), "tol": float(tol), "condition": condition,
                             "pass": ok, **extra}

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks.values())

    def failures(self) -> list:
        return ["%s (%s): %.3e > %.1e" % (k, c["condition"], c["value"], c["tol"])
                for k, c in self.checks.items() if not c["pass"]]

    def as_dict(self) -> dict:
        return {"checks": self.checks, "info": self.info, "pass": self.passed}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=1, default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


# --------------------------------------------------------------------------- #
# verification of a persisted bundle
# --------------------------------------------------------------------------- #


def simpson_window(grid: Grid, q_nodes, flux_nodes, times, K: int = None) -> WeakResidual:
    """Node-only weak residual over the full window [0, T] (composite Simpson)."""
    from .profile import simpson_weights

    times = np.asarray(times, dtype=float)
    T = times[-1] - times[0]
    K = grid.n // 4 if K is None else K
    mask = _mode_mask(grid, K)
    kvec = np.pi * grid.modes
    w = simpson_weights(len(times), times[1] - times[0])
    acc, ref = 0.0, 0.0
    for wt, t, q, fl in zip(w, times, q_nodes, flux_nodes):
        tau = (t - times[0]) / T
        qh, fh = _coeff(grid, np.asarray(q)), _coeff(grid, np.asarray(fl))
        term_t = wt * float(bump_d(tau)) / T * qh
        term_x = wt * float(bump(tau)) * (-1j) * np.sum(kvec * fh, axis=-grid.d - 1)
        acc = acc + term_t + term_x
        ref = ref + np.abs(term_t) + np.abs(term_x)
    vals = np.abs(np.asarray(acc))[..., mask].ravel()
    return WeakResidual(float(np.max(vals)), float(np.sqrt(np.mean(vals**2))),
                        float(np.max(np.asarray(ref)[..., mask])), vals.size)


def bundle_energy(loaded, model: ModelFunctions):
    """Energy series of a bundle and whether the monotonicity verdict applies.

    Admissible bundles: the certified envelope
    ``(|T^d|/2) Lambda_k + sum_{j<k} dt BOUND(Lambda_j)``, which bounds the
    energy change from t = 0 and must be non-increasing. Bundles in theorem1 mode:
    ``int E`` of the mean fields ``u = m / rho``, reported for information
    (those solutions carry no energy inequality).
    """
    from .subsolution import admissible_bound

    g = loaded.grid
    times = loaded.times
    if loaded.meta.get("mode") == "admissible":
        bound = admissible_bound(g, loaded.ends["rho0"], model)
        B = bound(loaded.Lambda)
        dt = np.diff(times)
        env = 0.5 * g.volume * loaded.Lambda + np.concatenate([[0.0], np.cumsum(dt * B[:-1])])
        return env, True, bound
    series = []
    for k in range(len(times)):
        rho = loaded.nodes["rho"][k]
        m = _momentum(loaded, k)
        series.append(energy_total(g, rho, m / rho, model))
    return np.array(series), False, None


def energy_total(grid: Grid, rho, u, model: ModelFunctions) -> float:
    a = u + model.offset(grid, rho)
    return float(grid.integrate(0.5 * rho * np.sum(a * a, axis=0)))


def _momentum(loaded, k):
    g = loaded.grid
    V = np.asarray(loaded.V[k]).reshape((g.d,) + (1,) * g.d)
    return loaded.nodes["v"][k] + V + g.grad(loaded.nodes["phi"][k])


def bundle_conserved(loaded, model: ModelFunctions) -> ConservedReport:
    g = loaded.grid
    rho = loaded.nodes["rho"]
    rhow = [_momentum(loaded, k) + rho[k] * model.offset(g, rho[k]) for k in range(len(rho))]
    return conserved_quantities(g, rho, rhow)


def verify_bundle(loaded, model: ModelFunctions, tol, shapes_cfg: dict = None,
                  tau: float = None) -> VerificationReport:
    """Re-derive every verdict of a persisted bundle from its stored fields."""
    from .profile import DensityProfileBundle, TimeGrid, make_time_shapes
    from .subsolution import (lambda_field, membership_from_fields, membership_matrix,
                              potential_rate)

    g, d = loaded.grid, loaded.grid.d
    T, times = loaded.T, loaded.times
    ends, nodes, meta = loaded.ends, loaded.nodes, loaded.meta
    rep = VerificationReport()
    tau = float(meta.get("tau", 0.0)) if tau is None else tau

    # profile
    rho, drho, phi = nodes["rho"], nodes["drho"], nodes["phi"]
    endp = max(float(np.max(np.abs(rho[0] - ends["rho0"]))), float(np.max(np.abs(rho[-1] - ends["rhoT"]))))
    rep.add("profile.endpoints", endp, 0.0, "conf endpoint equality")
    cont = max(float(np.max(np.abs(dr + g.laplacian(p)))) / max(float(np.max(np.abs(dr))), 1.0)
               for dr, p in zip(drho, phi))
    rep.add("profile.continuity", cont, tol.continuity, "c3 acoustic potential")
    lap0, lapT = g.laplacian(ends["phi0"]), g.laplacian(ends["phiT"])
    sc = max(float(np.max(np.abs(lap0))), float(np.max(np.abs(lapT))), 1.0)
    c5 = max(float(np.max(np.abs(drho[0] + lap0))), float(np.max(np.abs(drho[-1] + lapT)))) / sc
    rep.add("profile.c5", c5, tol.continuity, "c5 endpoint consistency")
    m0 = min(float(np.min(ends["rho0"])), float(np.min(ends["rhoT"])))
    floor = (1.0 - float(meta["theta"])) * m0
    low = min(float(np.min(r)) for r in rho)
    rep.add("profile.positivity", max(0.0, floor - low), 0.0, "c6b density positivity",
            rho_min=low, floor=floor)
    mass = np.array([float(g.integrate(r)) for r in rho])
    rep.add("profile.mass", float(np.max(np.abs(mass - mass[0]))) / abs(mass[0]), tol.mass,
            "i1 mass invariance")

    # continuity in weak form, profile evaluated analytically in time
    sh = dict(shapes_cfg or {})
    shapes = make_time_shapes(T, float(meta["delta"]), sh.get("s0"), sh.get("sT"))
    prof = DensityProfileBundle(g, TimeGrid(T, len(times)), shapes, ends["rho0"], ends["rhoT"],
                                ends["phi0"], ends["phiT"], lap0, lapT, None, None, None, None,
                                None, float(meta["delta"]), float(meta["theta"]), low)
    v0, vT = ends["v0"], ends["vT"]

    def v_at(t):
        return (1.0 - t / T) * v0 + (t / T) * vT

    def m_at(t):
        dr = prof.drho_at(t)[0]
        return v_at(t) + g.grad(g.poisson_solve(-dr, tol_mean=1e-9))

    wc = weak_residual_continuity(g, lambda t: prof.rho_at(t)[0], m_at, T, knots=shapes.knots)
    rep.add("continuity.weak", wc.relative, tol.weak, "i1 continuity (weak form)", **wc.as_dict())

    # affine v and flux F
    div_scale = max(float(np.max(np.abs(g.jacobian(v0)))), float(np.max(np.abs(g.jacobian(vT)))), 1.0)
    sol = max(float(np.max(np.abs(g.div(v)))) for v in nodes["v"]) / div_scale
    mean = max(float(np.max(np.abs(g.mean(v)))) for v in nodes["v"]) / max(
        max(float(np.max(np.abs(v))) for v in nodes["v"]), 1.0)
    rep.add("v.solenoidal", max(sol, mean), tol.solenoidal, "c22 divergence-free zero-mean v")
    ve = max(float(np.max(np.abs(nodes["v"][0] - v0))), float(np.max(np.abs(nodes["v"][-1] - vT))))
    rep.add("v.endpoints", ve, 0.0, "cc24 endpoint values")
    Ffull = ends["F"].full()
    dv = (vT - v0) / T
    strong = float(np.max(np.abs(dv + g.div_tensor(Ffull)))) / max(float(np.max(np.abs(dv))), 1.0)
    rep.add("flux.strong", strong, tol.flux, "subsolution flux d_t v + div F = 0")
    wm = weak_residual_momentum(g, v_at, lambda t: Ffull, T)
    rep.add("flux.weak", wm.relative, tol.weak, "subsolution flux (weak form)", **wm.as_dict())

    # mean drift
    V = loaded.V
    rep.add("drift.V0", float(np.max(np.abs(V[0] - np.asarray(meta["V0"])))), 0.0, "c10 initial mean momentum")
    VT = np.asarray(meta["VT"])
    rep.add("drift.terminal", float(np.max(np.abs(V[-1] - VT))) / max(1.0, float(np.max(np.abs(VT)))),
            tol.drift, "cc2 momentum compatibility")

    # membership, recomputed from stored fields
    F = ends["F"]
    lam, rate, tr = [], [], 0.0
    c21 = []
    for k in range(len(times)):
        K = membership_matrix(g, rho[k], phi[k], V[k], nodes["v"][k], F, nodes["M"][k], nodes["N"][k])
        lam.append(lambda_field(K))
        rate.append(potential_rate(model, rho[k], drho[k], nodes["dphi"][k]))
        m = _momentum(loaded, k)
        od = odot(m) / rho[k]
        trace = sum(od[i, i] for i in range(d))
        tr = max(tr, float(np.max(np.abs(trace))) / max(float(np.max(np.abs(od))), 1.0))
        c21.append(od + (nodes["M"][k] + nodes["N"][k]).full())
    memb = membership_from_fields(times, lam, rate, loaded.Lambda, d, tau)
    rep.add("membership", -memb.margin, 0.0, "cc25 subsolution membership",
            passed=memb.passed, margin=memb.margin)
    e_min = min(float(np.min(loaded.Lambda[k] - 0.5 * d * rate[k])) for k in range(len(times)))
    rep.add("kinetic_level", -e_min, 0.0, "c23 positive kinetic level", passed=e_min > 0, e_min=e_min)
    rep.add("odot.trace", tr, tol.trace, "trace-free dyad")

    c21w = simpson_window(g, nodes["v"], c21, times)
    rep.info["c21_reformulated_defect"] = c21w.as_dict()
    rep.info["membership"] = memb.as_dict()
    cons = bundle_conserved(loaded, model)
    rep.info["conserved"] = cons.as_dict()

    # energy
    series, applies, bound = bundle_energy(loaded, model)
    ev = energy_monitor(times, series, tol.energy_mono)
    rep.info["energy"] = ev.as_dict()
    rep.info["energy"]["applies"] = applies
    if applies:
        rep.add("energy.monotone", ev.max_uptick, tol.energy_mono, "cc31 energy inequality",
                worst_time=ev.worst_time)
        L = loaded.Lambda
        rep.add("lambda.monotone", float(np.max(np.diff(L))), 0.0, "c27 non-increasing energy level")
        cert = 0.5 * g.volume * np.diff(L) / np.diff(times) + bound(L[:-1])
        k = int(np.argmax(cert))
        rep.add("lambda.certificate", float(cert[k]), tol.certificate,
                "c27 admissible energy level", worst_time=float(times[k]))
    return rep
