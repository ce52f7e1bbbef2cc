"""Built-in data sets ``(rho_0, u_0, rho_T, u_T)``."""
from __future__ import annotations

import numpy as np

from .models import ModelFunctions
from .torus import Grid

SCENARIOS = ("static-admissible", "two-mode-transfer", "incompatible-demo")

# model sections used when a config names a scenario but no model
DEFAULT_MODELS = {
    "static-admissible": {"family": "power", "gamma": 2.0,
                          "h": {"direction": [0.01, 0.005], "exponent": 1.0}},
    "two-mode-transfer": {"family": "power", "gamma": 2.0,
                          "h": {"direction": [0.5, 0.25], "exponent": 1.0}},
    "incompatible-demo": {"family": "power", "gamma": 2.0, "h": "zero"},
}


def _vec(grid: Grid, *comps):
    out = np.zeros((grid.d,) + grid.shape)
    for i, c in enumerate(comps):
        out[i] = c
    return out


def make_scenario(name: str, grid: Grid, model: ModelFunctions):
    """Fields of a named scenario; momenta are built first and divided by rho.

    ``two-mode-transfer`` adds a constant to ``rho_T u_T`` so that the
    momentum balance ``int rho_T u_T - int rho_0 u_0 = int rho_0 h(rho_0) -
    int rho_T h(rho_T)`` holds for the given model.
    """
    x = grid.coords
    s1, s2 = np.sin(np.pi * x[0]), np.sin(np.pi * x[1])
    c1, c2 = np.cos(np.pi * x[0]), np.cos(np.pi * x[1])
    if name == "static-admissible":
        rho = 2.0 + 0.5 * s1 * s2
        zero = np.zeros((grid.d,) + grid.shape)
        return rho, zero, rho.copy(), zero.copy()
    if name == "two-mode-transfer":
        rho0 = 2.0 + 0.5 * s1
        rhoT = 2.0 + 0.3 * s2
        m0 = _vec(grid, 1.5 * s2 + 0.3 * s1, 1.5 * s1)
        mT = _vec(grid, 1.5 * c2, 1.5 * c1 + 0.2 * c2)
        corr = (grid.integrate(m0) + grid.integrate(model.rho_h(rho0))
                - grid.integrate(model.rho_h(rhoT))) / grid.volume
        mT = mT + corr.reshape((grid.d,) + (1,) * grid.d)
        return rho0, m0 / rho0, rhoT, mT / rhoT
    if name == "incompatible-demo":
        rho0 = 2.0 + 0.5 * s1
        rhoT = 3.0 + 0.5 * s2
        zero = np.zeros((grid.d,) + grid.shape)
        return rho0, zero, rhoT, zero.copy()
    raise ValueError("unknown scenario %r (choose from %s)" % (name, ", ".join(SCENARIOS)))
