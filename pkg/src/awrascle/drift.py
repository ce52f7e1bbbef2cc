"""Compatibility of the end states and the spatial-mean momentum V(t)."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import EndpointMismatch
from .models import ModelFunctions
from .profile import DensityProfileBundle, cumulative_simpson
from .torus import Grid


@dataclass
class DataPair:
    """Initial and terminal states ``(rho_0, u_0)``, ``(rho_T, u_T)``."""

    grid: Grid
    rho0: np.ndarray
    u0: np.ndarray
    rhoT: np.ndarray
    uT: np.ndarray

    @cached_property
    def start(self):
        """Helmholtz parts ``(v_0, V_0, phi_0)`` of ``rho_0 u_0``."""
        return self.grid.helmholtz(self.rho0 * self.u0)

    @cached_property
    def end(self):
        return self.grid.helmholtz(self.rhoT * self.uT)


@dataclass
class CompatibilityReport:
    mass_defect: float
    momentum_defect: list
    inf_rho0: float
    inf_rhoT: float
    mass_pass: bool
    momentum_pass: bool
    positivity_pass: bool
    cc5_defect: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.mass_pass and self.momentum_pass and self.positivity_pass

    def failures(self) -> list:
        out = []
        if not self.positivity_pass:
            out.append("cc1 positive infimum")
        if not self.mass_pass:
            out.append("cc1 mass compatibility")
        if not self.momentum_pass:
            out.append("cc2 momentum compatibility")
        return out

    def as_dict(self) -> dict:
        return {
            "mass_defect": self.mass_defect,
            "momentum_defect": list(self.momentum_defect),
            "cc5_defect": list(self.cc5_defect),
            "inf_rho0": self.inf_rho0,
            "inf_rhoT": self.inf_rhoT,
            "pass": self.passed,
        }


def check_compatibility(data: DataPair, model: ModelFunctions, tol_mass: float = 1e-10,
                        tol_momentum: float = 1e-8) -> CompatibilityReport:
    g = data.grid
    m0, mT = float(g.integrate(data.rho0)), float(g.integrate(data.rhoT))
    mass_defect = abs(mT - m0)
    p0 = g.integrate(data.rho0 * data.u0)
    pT = g.integrate(data.rhoT * data.uT)
    h0 = g.integrate(model.rho_h(data.rho0))
    hT = g.integrate(model.rho_h(data.rhoT))
    mom = (pT - p0) - (h0 - hT)
    scale = max(float(np.max(np.abs(np.concatenate([p0, pT, h0, hT])))), 1.0)
    return CompatibilityReport(
        mass_defect=mass_defect,
        momentum_defect=[float(x) for x in mom],
        inf_rho0=float(np.min(data.rho0)),
        inf_rhoT=float(np.min(data.rhoT)),
        mass_pass=mass_defect <= tol_mass * abs(m0),
        momentum_pass=bool(np.max(np.abs(mom)) <= tol_momentum * scale),
        positivity_pass=bool(np.min(data.rho0) > 0 and np.min(data.rhoT) > 0),
    )


@dataclass
class MeanDrift:
    times: np.ndarray
    V: np.ndarray       # (n_t, d)
    dV: np.ndarray      # (n_t, d)
    cc5_defect: np.ndarray
    terminal_defect: np.ndarray = None

    def V_at(self, t):
        return CubicSpline(self.times, self.V, axis=0)(t)


def drift_integrand(profile: DensityProfileBundle, model: ModelFunctions, times) -> np.ndarray:
    """``int_T d_t(rho h(rho)) dx`` at the given times, shape ``(len(times), d)``."""
    g = profile.grid
    rho = profile.rho_at(times)
    drho = profile.drho_at(times)
    out = []
    for r, dr in zip(rho, drho):
        out.append(g.integrate(model.d_rho_h(r) * dr))
    return np.array(out)


def build_mean_drift(profile: DensityProfileBundle, model: ModelFunctions, V0, VT=None,
                     tol: float = 1e-8, panels: int = 4) -> MeanDrift:
    """V(t) = V_0 - |T^d|^-1 int_0^t int d_t(rho h(rho)).

    The time integral is composite Simpson of the exact integrand
    ``(h + rho h') d_t rho``, with panels aligned to the profile's shape knots.
    The endpoint identity ``|T^d| V(T) = |T^d| V_0 - int rho_T h(rho_T) +
    int rho_0 h(rho_0)`` is enforced to ``tol`` (relative); so is
    ``V(T) = V_T`` when ``VT`` is given.
    """
    g = profile.grid
    vol = g.volume
    V0 = np.asarray(V0, dtype=float)
    times = profile.times
    cum = cumulative_simpson(lambda ts: drift_integrand(profile, model, ts), times,
                             knots=profile.shapes.knots, panels=panels)
    V = V0[None, :] - cum / vol
    dV = np.stack([-g.integrate(model.d_rho_h(r) * dr) / vol
                   for r, dr in zip(profile.rho, profile.drho)])

    h0 = g.integrate(model.rho_h(profile.rho0))
    hT = g.integrate(model.rho_h(profile.rhoT))
    target = vol * V0 - hT + h0
    defect = vol * V[-1] - target
    scale = max(float(np.max(np.abs(np.concatenate([vol * V0, h0, hT])))), 1e-300)
    if np.max(np.abs(defect)) > tol * scale:
        raise EndpointMismatch(
            "|T^d| V(T) misses the cc5 identity by %s (relative %.3e > %.1e); "
            "refine the time grid or check the data" % (defect, np.max(np.abs(defect)) / scale, tol))
    term = None
    if VT is not None:
        term = V[-1] - np.asarray(VT, dtype=float)
        tscale = max(scale / vol, float(np.max(np.abs(VT))), 1e-300)
        if np.max(np.abs(term)) > tol * max(tscale, 1.0):
            raise EndpointMismatch(
                "V(T) = %s differs from V_T = %s; terminal momentum is incompatible"
                % (V[-1], VT), condition="cc2 momentum compatibility")
    return MeanDrift(times, V, dV, defect, term)
