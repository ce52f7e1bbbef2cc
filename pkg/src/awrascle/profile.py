"""Density profile joining rho_0 to rho_T and its acoustic potential.

The profile is

    rho(t) = H(t) rho_0 + (1 - H(t)) rho_T + Z0(t) Lap(phi_0) + ZT(t) Lap(phi_T)

with C^2 piecewise-quintic time shapes. Because the shapes are explicit
polynomials, d_t rho and d_tt rho are exact, and phi(t) solves
``Lap(phi) = -d_t rho`` up to Poisson-solver accuracy.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import BadWindow, IncompatibleMass, PositivityFailure
from .parallel import pmap
from .torus import Grid

# q(s) = s (1 - s)^3 (1 + 3 s): q(0) = 0, q'(0) = 1, q''(0) = 0, and a triple
# zero at s = 1, so the cut-off shapes are C^2 at the end of their support.
_Q = np.polynomial.Polynomial([0.0, 1.0, 0.0, -6.0, 8.0, -3.0])
_DQ = _Q.deriv()
_D2Q = _Q.deriv(2)
_QMAX = float(max(_Q(r.real) for r in _DQ.roots() if abs(r.imag) < 1e-12 and 0 < r.real < 1))
# fraction of delta the cut-off shapes may reach
_FILL = 0.9


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


def _smoothstep_d(s):
    s = np.clip(s, 0.0, 1.0)
    return 30.0 * s**2 * (1.0 - s) ** 2


def _smoothstep_dd(s):
    s = np.clip(s, 0.0, 1.0)
    return 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s)


@dataclass(frozen=True)
class TimeShape:
    kind: str
    value: Callable
    d1: Callable
    d2: Callable
    support: tuple

    def __call__(self, t):
        return self.value(t)


@dataclass(frozen=True)
class TimeShapes:
    H: TimeShape
    Z0: TimeShape
    ZT: TimeShape
    T: float
    delta: float

    @property
    def knots(self) -> tuple:
        """Interior points where the cut-off shapes lose smoothness."""
        ks = {self.Z0.support[1], self.ZT.support[0]}
        return tuple(sorted(k for k in ks if 0.0 < k < self.T))


def _cutoff(length: float, sign: float, origin: float, direction: float, kind: str,
            support: tuple) -> TimeShape:
    # value(t) = sign * length * q(direction * (t - origin) / length) inside the support
    def s_of(t):
        return direction * (np.asarray(t, dtype=float) - origin) / length

    def inside(s):
        return (s >= 0.0) & (s <= 1.0)

    def value(t):
        s = s_of(t)
        return np.where(inside(s), sign * length * _Q(np.clip(s, 0, 1)), 0.0)

    def d1(t):
        s = s_of(t)
        return np.where(inside(s), sign * direction * _DQ(np.clip(s, 0, 1)), 0.0)

    def d2(t):
        s = s_of(t)
        return np.where(inside(s), sign * _D2Q(np.clip(s, 0, 1)) / length, 0.0)

    return TimeShape(kind, value, d1, d2, support)


def make_time_shapes(T: float, delta: float, s0: float = None, sT: float = None) -> TimeShapes:
    """H, Z0 and ZT on [0, T].

    ``s0`` / ``sT`` bound the supports of Z0 (in [0, s0]) and ZT (in [sT, T]);
    defaults T/4 and 3T/4. The cut-off shapes have slope -1 at their anchored
    end and stay below ``0.9 * delta`` in magnitude.
    """
    s0 = 0.25 * T if s0 is None else float(s0)
    sT = 0.75 * T if sT is None else float(sT)
    if not (0.0 < s0 < sT < T):
        raise BadWindow("need 0 < s0 < sT < T, got s0=%g sT=%g T=%g" % (s0, sT, T))
    if delta <= 0:
        raise ValueError("delta must be positive")
    ell = _FILL * delta / _QMAX
    l0, lT = min(s0, ell), min(T - sT, ell)

    H = TimeShape(
        "H",
        lambda t: 1.0 - _smoothstep(np.asarray(t, dtype=float) / T),
        lambda t: -_smoothstep_d(np.asarray(t, dtype=float) / T) / T,
        lambda t: -_smoothstep_dd(np.asarray(t, dtype=float) / T) / T**2,
        (0.0, T),
    )
    Z0 = _cutoff(l0, -1.0, 0.0, 1.0, "Z0", (0.0, l0))
    ZT = _cutoff(lT, 1.0, T, -1.0, "ZT", (T - lT, T))
    return TimeShapes(H, Z0, ZT, float(T), float(delta))


@dataclass(frozen=True)
class TimeGrid:
    T: float
    n_t: int

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.n_t < 3 or self.n_t % 2 == 0:
            raise ValueError("n_t must be odd and >= 3, got %r" % (self.n_t,))

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_t)

    @property
    def dt(self) -> float:
        return self.T / (self.n_t - 1)


def simpson_weights(n: int, dt: float) -> np.ndarray:
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * dt / 3.0


def cumulative_simpson(fn: Callable, times: np.ndarray, knots=(), panels: int = 2) -> np.ndarray:
    """``int_0^{t_k} fn`` at every node by composite Simpson.

    Panels are aligned with ``times`` and ``knots``; each gap between
    consecutive break points gets ``panels`` Simpson panels. ``fn`` maps a
    1-D array of times to an array with leading time axis.
    """
    times = np.asarray(times, dtype=float)
    brk = np.unique(np.concatenate([times, [k for k in knots if times[0] < k < times[-1]]]))
    m = 2 * panels
    pts = np.concatenate(
        [np.linspace(a, b, m + 1)[:-1] for a, b in zip(brk[:-1], brk[1:])] + [brk[-1:]])
    vals = np.asarray(fn(pts))
    out_shape = vals.shape[1:]
    cum = np.zeros((len(brk),) + out_shape)
    acc = np.zeros(out_shape)
    for j, (a, b) in enumerate(zip(brk[:-1], brk[1:])):
        seg = vals[j * m: (j + 1) * m + 1]
        w = simpson_weights(m + 1, (b - a) / m)
        acc = acc + np.tensordot(w, seg, axes=(0, 0))
        cum[j + 1] = acc
    idx = np.searchsorted(brk, times)
    return cum[idx]


@dataclass
class DensityProfileBundle:
    grid: Grid
    timegrid: TimeGrid
    shapes: TimeShapes
    rho0: np.ndarray
    rhoT: np.ndarray
    phi0: np.ndarray
    phiT: np.ndarray
    lap0: np.ndarray
    lapT: np.ndarray
    rho: np.ndarray
    drho: np.ndarray
    d2rho: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    delta: float
    theta: float
    rho_min: float
    checks: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.timegrid.times

    def rho_at(self, t):
        """Density at arbitrary times; leading axis follows ``t`` when it is an array."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        S = self.shapes
        e = (slice(None),) + (None,) * self.grid.d
        out = (S.H(t)[e] * self.rho0 + (1.0 - S.H(t))[e] * self.rhoT
               + S.Z0(t)[e] * self.lap0 + S.ZT(t)[e] * self.lapT)
        return out

    def drho_at(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        S = self.shapes
        e = (slice(None),) + (None,) * self.grid.d
        return (S.H.d1(t)[e] * (self.rho0 - self.rhoT)
                + S.Z0.d1(t)[e] * self.lap0 + S.ZT.d1(t)[e] * self.lapT)

    def d2rho_at(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        S = self.shapes
        e = (slice(None),) + (None,) * self.grid.d
        return (S.H.d2(t)[e] * (self.rho0 - self.rhoT)
                + S.Z0.d2(t)[e] * self.lap0 + S.ZT.d2(t)[e] * self.lapT)

    def phi_at(self, t):
        return np.stack([self.grid.poisson_solve(-g, tol_mean=1e-9) for g in self.drho_at(t)])


def _positivity_min(grid, rho0, rhoT, lap0, lapT, shapes, times):
    e = (slice(None),) + (None,) * grid.d
    S = shapes
    lo = np.inf
    for chunk in np.array_split(times, max(1, len(times) // 16)):
        r = (S.H(chunk)[e] * rho0 + (1.0 - S.H(chunk))[e] * rhoT
             + S.Z0(chunk)[e] * lap0 + S.ZT(chunk)[e] * lapT)
        lo = min(lo, float(np.min(r)))
    return lo


def build_profile(grid: Grid, rho0, rhoT, phi0, phiT, timegrid: TimeGrid,
                  delta0: float = None, s0: float = None, sT: float = None,
                  theta: float = 0.05, tol_mass: float = 1e-10, max_halvings: int = 60,
                  threads: int = 1) -> DensityProfileBundle:
    """Build the density profile and acoustic potential on the time grid.

    ``delta`` starts at ``delta0`` (default ``0.1 m / (1 + max|Lap phi|)``
    with ``m = min(inf rho_0, inf rho_T)``) and is halved until
    ``rho >= (1 - theta) m`` on the nodes and a 4x refined time sampling.
    """
    rho0 = np.asarray(rho0, dtype=float)
    rhoT = np.asarray(rhoT, dtype=float)
    m = min(float(np.min(rho0)), float(np.min(rhoT)))
    if m <= 0:
        raise PositivityFailure("data density has non-positive infimum %.3e" % m)
    M0, MT = float(grid.integrate(rho0)), float(grid.integrate(rhoT))
    if abs(M0 - MT) > tol_mass * abs(M0):
        raise IncompatibleMass("int rho_0 = %.12g but int rho_T = %.12g (defect %.3e)"
                               % (M0, MT, M0 - MT))

    lap0 = grid.laplacian(phi0)
    lapT = grid.laplacian(phiT)
    size = max(float(np.max(np.abs(lap0))), float(np.max(np.abs(lapT))))
    delta = delta0 if delta0 is not None else 0.1 * m / (1.0 + size)
    T = timegrid.T
    fine = np.linspace(0.0, T, 4 * (timegrid.n_t - 1) + 1)
    floor = (1.0 - theta) * m
    for _ in range(max_halvings):
        shapes = make_time_shapes(T, delta, s0, sT)
        low = _positivity_min(grid, rho0, rhoT, lap0, lapT, shapes, fine)
        if low >= floor:
            break
        delta *= 0.5
    else:
        raise PositivityFailure("no delta down to %.3e keeps rho >= %.4g" % (delta, floor))

    times = timegrid.times
    bundle = DensityProfileBundle(
        grid, timegrid, shapes, rho0, rhoT, np.asarray(phi0, float), np.asarray(phiT, float),
        lap0, lapT, rho=None, drho=None, d2rho=None, phi=None, dphi=None,
        delta=float(delta), theta=float(theta), rho_min=float(low))

    def node(t):
        r = bundle.rho_at(t)[0]
        dr = bundle.drho_at(t)[0]
        ddr = bundle.d2rho_at(t)[0]
        return (r, dr, ddr, grid.poisson_solve(-dr, tol_mean=1e-9),
                grid.poisson_solve(-ddr, tol_mean=1e-9))

    parts = pmap(node, times, threads)
    bundle.rho, bundle.drho, bundle.d2rho, bundle.phi, bundle.dphi = (
        np.stack([p[i] for p in parts]) for i in range(5))
    # exact endpoints
    bundle.rho[0], bundle.rho[-1] = rho0, rhoT
    bundle.rho_min = min(bundle.rho_min, float(np.min(bundle.rho)))
    bundle.checks = profile_checks(bundle)
    return bundle


def profile_checks(b: DensityProfileBundle) -> dict:
    """Defects of the profile invariants (relative where a scale exists)."""
    g = b.grid
    scale_lap = max(float(np.max(np.abs(b.lap0))), float(np.max(np.abs(b.lapT))), 1e-300)
    cont = [float(np.max(np.abs(g.laplacian(p) + dr))) / max(float(np.max(np.abs(dr))), 1e-300)
            if np.any(dr) else float(np.max(np.abs(g.laplacian(p))))
            for p, dr in zip(b.phi, b.drho)]
    mass = np.array([float(g.integrate(r)) for r in b.rho])
    m0 = min(float(np.min(b.rho0)), float(np.min(b.rhoT)))
    return {
        "endpoint_rho0": float(np.max(np.abs(b.rho[0] - b.rho0))),
        "endpoint_rhoT": float(np.max(np.abs(b.rho[-1] - b.rhoT))),
        "c5_start": float(np.max(np.abs(b.drho[0] + b.lap0))) / scale_lap,
        "c5_end": float(np.max(np.abs(b.drho[-1] + b.lapT))) / scale_lap,
        "continuity_max": max(cont),
        "mass_drift": float(np.max(np.abs(mass - mass[0]))) / abs(mass[0]),
        "rho_min": b.rho_min,
        "positivity_floor": (1.0 - b.theta) * m0,
    }
