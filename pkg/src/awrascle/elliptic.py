"""Traceless-symmetric elliptic corrections M, N[v] and the flux F.

All three solve

    div(grad U + grad U^T - (2/d) div U I) = rhs,      mean(U) = 0,

and return the tensor ``grad U + grad U^T - (2/d) div U I``. In Fourier
space the operator is ``-S(k)`` with ``S(k) = |k|^2 I + (1 - 2/d) k k^T``;
it is inverted mode by mode with the Sherman-Morrison formula.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonZeroMean, NotSolenoidal
from .models import ModelFunctions
from .torus import Grid, SymTensor0, check_zero_mean


def lame_symbol(k: np.ndarray, d: int) -> np.ndarray:
    """``S(k)`` for a single wavevector (used by tests and diagnostics)."""
    k = np.asarray(k, dtype=float)
    return np.dot(k, k) * np.eye(d) + (1.0 - 2.0 / d) * np.outer(k, k)


def deviatoric_strain(grid: Grid, U: np.ndarray) -> SymTensor0:
    """``grad U + grad U^T - (2/d) div U I`` via spectral derivatives."""
    jac = grid.jacobian(U)
    return SymTensor0.from_full(jac + np.swapaxes(jac, 0, 1))


def lame_apply(grid: Grid, U: np.ndarray) -> np.ndarray:
    """Forward operator ``div(grad U + grad U^T - (2/d) div U I)``."""
    return grid.div_tensor(deviatoric_strain(grid, U).full())


def lame_solve(grid: Grid, rhs: np.ndarray, tol_mean: float = 1e-10):
    """Zero-mean ``U`` and its deviatoric strain tensor for the given rhs.

    Raises NonZeroMean when a component of ``rhs`` has relative mean above
    ``tol_mean`` (the problem is solvable on the torus iff the mean is zero).
    """
    rhs = np.asarray(rhs, dtype=float)
    d = grid.d
    check_zero_mean(grid, rhs, tol_mean, what="elliptic right-hand side")
    rh = grid.fft(rhs)
    kd, kd2 = grid.kd, grid.kd2
    c = 1.0 - 2.0 / d
    safe = np.where(kd2 == 0.0, 1.0, kd2)
    kr = np.sum(kd * rh, axis=0)
    # S^-1 r = (r - c/(1+c) k (k.r)/|k|^2) / |k|^2
    Uh = -(rh - (c / (1.0 + c)) * kd * kr / safe) / safe
    Uh = np.where(kd2 == 0.0, 0.0, Uh)
    U = grid.ifft(Uh)

    divh = 1j * np.sum(kd * Uh, axis=0)
    ent = []
    pairs = {2: ((0, 0), (0, 1)), 3: ((0, 0), (1, 1), (0, 1), (0, 2), (1, 2))}[d]
    for i, j in pairs:
        th = 1j * (kd[i] * Uh[j] + kd[j] * Uh[i])
        if i == j:
            th = th - (2.0 / d) * divh
        ent.append(grid.ifft(th))
    return U, SymTensor0(d, np.stack(ent))


def _outer_div(grid: Grid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``div(a (x) b)_j = sum_i d_i (a_j b_i)`` with dealiased products."""
    d = grid.d
    t = np.stack([np.stack([grid.product(a[j], b[i]) for i in range(d)]) for j in range(d)])
    return grid.div_tensor(t)


def m_rhs(grid: Grid, model: ModelFunctions, rho, drho, phi, V) -> np.ndarray:
    """Right-hand side of the first elliptic problem at one instant.

    ``div((h + grad p) (x) (V + grad phi)) + d_t(rho h) - mean(d_t(rho h))``.
    """
    grad_rho = grid.grad(rho)
    a = model.offset(grid, rho, grad_rho)
    b = grid.grad(phi) + np.asarray(V, dtype=float).reshape((grid.d,) + (1,) * grid.d)
    dt_rho_h = model.d_rho_h(rho) * drho
    mean = grid.mean(dt_rho_h).reshape((grid.d,) + (1,) * grid.d)
    return _outer_div(grid, a, b) + (dt_rho_h - mean)


def n_rhs(grid: Grid, model: ModelFunctions, rho, v) -> np.ndarray:
    """``((v . grad)(h + grad p))_j = sum_i v_i d_i (h_j + d_j p)``."""
    a = model.offset(grid, rho)
    jac = grid.jacobian(a)             # jac[j, i] = d_i a_j
    d = grid.d
    return np.stack([sum(grid.product(v[i], jac[j, i]) for i in range(d)) for j in range(d)])


def build_M(grid: Grid, model: ModelFunctions, rho, drho, phi, V,
            tol_mean: float = 1e-12) -> SymTensor0:
    rhs = m_rhs(grid, model, rho, drho, phi, V)
    check_zero_mean(grid, rhs, tol_mean, what="M right-hand side")
    return lame_solve(grid, rhs)[1]


def check_solenoidal(grid: Grid, v, tol: float = 1e-10) -> float:
    div = grid.div(v)
    scale = float(np.max(np.abs(grid.jacobian(v))))
    rel = float(np.max(np.abs(div))) / scale if scale > 0 else 0.0
    if rel > tol:
        raise NotSolenoidal("div v has relative size %.3e > %.1e" % (rel, tol))
    mean = float(np.max(np.abs(grid.mean(v))))
    vs = float(np.max(np.abs(v)))
    if vs > 0 and mean / vs > tol:
        raise NotSolenoidal("v has non-zero mean %.3e" % mean, condition="c2 zero-mean v")
    return rel


def build_N(grid: Grid, model: ModelFunctions, rho, v, tol_div: float = 1e-10,
            tol_mean: float = 1e-12) -> SymTensor0:
    """``N[v]``; linear in ``v``. ``v`` must be divergence-free and zero-mean."""
    check_solenoidal(grid, v, tol_div)
    rhs = n_rhs(grid, model, rho, v)
    check_zero_mean(grid, rhs, tol_mean, what="N right-hand side")
    return lame_solve(grid, rhs)[1]


def build_F(grid: Grid, v0, vT, T: float, tol_mean: float = 1e-10) -> SymTensor0:
    """Time-independent flux with ``d_t v + div F = 0`` for the affine path
    ``v(t) = (1 - t/T) v0 + (t/T) vT``."""
    diff = np.asarray(vT, dtype=float) - np.asarray(v0, dtype=float)
    try:
        return lame_solve(grid, -diff / T, tol_mean=tol_mean)[1]
    except NonZeroMean as exc:
        raise NonZeroMean("v_T - v_0 must have zero mean: %s" % exc) from None


@dataclass
class ProbeRecord:
    frequencies: list
    distances: list

    @property
    def monotone(self) -> bool:
        d = self.distances
        return all(b <= a for a, b in zip(d[:-1], d[1:]))

    @property
    def strictly_decreasing(self) -> bool:
        d = self.distances
        return all(b < a for a, b in zip(d[:-1], d[1:]))


def weak_continuity_probe(grid: Grid, model: ModelFunctions, rho, v_seq, v_limit,
                          frequencies=None) -> ProbeRecord:
    """Sup-norm distances ``||N[v_n] - N[v]||`` along a weakly converging sequence."""
    n_lim = build_N(grid, model, rho, v_limit)
    dist = [(build_N(grid, model, rho, vn) - n_lim).sup_norm() for vn in v_seq]
    freqs = list(frequencies) if frequencies is not None else list(range(len(dist)))
    return ProbeRecord(freqs, dist)


def oscillating_sequence(grid: Grid, v, frequencies=(2, 4, 8, 16), amplitude: float = 1.0):
    """``v + A sin(pi n x_1) e_2``: solenoidal, zero-mean, weakly converging to ``v``."""
    out = []
    for n in frequencies:
        w = np.array(v, dtype=float, copy=True)
        w[1] = w[1] + amplitude * np.sin(np.pi * n * grid.coords[0])
        out.append(w)
    return out
