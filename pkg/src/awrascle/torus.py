"""Pseudo-spectral calculus on the flat torus [-1, 1)^d.

Fields are plain numpy arrays sampled on a uniform grid:

* scalar: shape ``(n,) * d``
* vector: shape ``(d,) + (n,) * d``; component ``i`` is ``field[i]``
* tensor: shape ``(d, d) + (n,) * d``; traceless symmetric tensors are held
  in :class:`SymTensor0`, which stores only the independent entries.

Axis ``i`` of the sample array is the ``x_{i+1}`` direction (``indexing="ij"``).
Derivatives use the real FFT. The Nyquist wavenumber is dropped from first
derivatives so odd-order derivatives stay real; the Laplacian symbol keeps it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import NonZeroMean


def pairwise_sum(a: np.ndarray, naxes: int) -> np.ndarray:
    """Sum the trailing ``naxes`` axes with a fixed binary tree.

    The trailing size must be a power of two. The association order depends
    only on the array shape, so the result is bit-reproducible.
    """
    flat = a.reshape(a.shape[: a.ndim - naxes] + (-1,))
    size = flat.shape[-1]
    if size & (size - 1):
        raise ValueError("pairwise_sum needs a power-of-two block, got %d" % size)
    while flat.shape[-1] > 1:
        flat = flat[..., 0::2] + flat[..., 1::2]
    return flat[..., 0]


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with ``n`` points per axis on ``[-1, 1)^d``.

    ``dealias`` switches on 2/3-rule truncation in :meth:`product`.
    """

    d: int
    n: int
    dealias_products: bool = True

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError("torus dimension must be 2 or 3, got %r" % (self.d,))
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError("n must be a power of two >= 8, got %r" % (self.n,))

    # -- geometry ---------------------------------------------------------
    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def volume(self) -> float:
        """Measure of the torus, 2**d."""
        return float(2**self.d)

    @property
    def npoints(self) -> int:
        return self.n**self.d

    @property
    def axes(self) -> tuple:
        return tuple(range(-self.d, 0))

    @cached_property
    def x1d(self) -> np.ndarray:
        return -1.0 + 2.0 * np.arange(self.n) / self.n

    @cached_property
    def coords(self) -> np.ndarray:
        """Stacked coordinates, shape ``(d,) + grid.shape``."""
        return np.stack(np.meshgrid(*([self.x1d] * self.d), indexing="ij"))

    # -- spectral bookkeeping --------------------------------------------
    @cached_property
    def modes(self) -> np.ndarray:
        """Integer mode numbers m, shape ``(d,) + spectral shape``; k = pi*m."""
        full = np.fft.fftfreq(self.n, 1.0 / self.n)
        half = np.fft.rfftfreq(self.n, 1.0 / self.n)
        m = np.meshgrid(*([full] * (self.d - 1) + [half]), indexing="ij")
        return np.stack(m)

    @cached_property
    def k(self) -> np.ndarray:
        return np.pi * self.modes

    @cached_property
    def kd(self) -> np.ndarray:
        """First-derivative wavenumbers; zero on the Nyquist index of each axis."""
        kd = self.k.copy()
        kd[np.abs(self.modes) == self.n // 2] = 0.0
        return kd

    @cached_property
    def k2(self) -> np.ndarray:
        return np.sum(self.k**2, axis=0)

    @cached_property
    def kd2(self) -> np.ndarray:
        return np.sum(self.kd**2, axis=0)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        return np.all(3 * np.abs(self.modes) < self.n, axis=0)

    @cached_property
    def _rfft_weight(self) -> np.ndarray:
        # multiplicity of each half-spectrum coefficient in the full spectrum
        w = np.full(self.modes.shape[1:], 2.0)
        last = self.modes[-1]
        w[(last == 0) | (last == self.n // 2)] = 1.0
        return w

    def fft(self, f: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(f, axes=self.axes)

    def ifft(self, fh: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(fh, s=self.shape, axes=self.axes)

    # -- differential operators ------------------------------------------
    def grad(self, f: np.ndarray) -> np.ndarray:
        fh = self.fft(f)
        return np.stack([self.ifft(1j * self.kd[i] * fh) for i in range(self.d)])

    def partial(self, f: np.ndarray, i: int) -> np.ndarray:
        return self.ifft(1j * self.kd[i] * self.fft(f))

    def div(self, v: np.ndarray) -> np.ndarray:
        vh = self.fft(v)
        return self.ifft(1j * np.sum(self.kd * vh, axis=0))

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return self.ifft(-self.k2 * self.fft(f))

    def jacobian(self, v: np.ndarray) -> np.ndarray:
        """``J[i, j] = d v_i / d x_j``."""
        vh = self.fft(v)
        return np.stack(
            [np.stack([self.ifft(1j * self.kd[j] * vh[i]) for j in range(self.d)])
             for i in range(self.d)]
        )

    def div_tensor(self, t: np.ndarray) -> np.ndarray:
        """Row-wise divergence ``(div T)_j = sum_i d_i T[j, i]``.

        With this convention ``div(a (x) b)_j = sum_i d_i (a_j b_i)``, the
        transport form used by the momentum equations.
        """
        th = self.fft(t)
        return np.stack(
            [self.ifft(1j * np.sum(self.kd * th[j], axis=0)) for j in range(self.d)]
        )

    # -- quadrature and norms --------------------------------------------
    def integrate(self, f: np.ndarray) -> np.ndarray:
        """Grid-sum quadrature over the trailing d axes; exact for resolved modes."""
        return pairwise_sum(np.asarray(f, dtype=float), self.d) * (2.0 / self.n) ** self.d

    def mean(self, f: np.ndarray) -> np.ndarray:
        return self.integrate(f) / self.volume

    def l2_norm(self, f: np.ndarray) -> float:
        f = np.asarray(f)
        sq = f**2
        if f.ndim > self.d:
            sq = sq.reshape((-1,) + self.shape).sum(axis=0)
        return float(np.sqrt(self.integrate(sq)))

    def spectral_l2_norm(self, f: np.ndarray) -> float:
        """L2 norm from the Fourier coefficients (Parseval)."""
        fh = self.fft(f)
        power = self._rfft_weight * np.abs(fh) ** 2
        total = float(np.sum(power))
        return float(np.sqrt(total * self.volume / self.npoints**2))

    # -- nonlinear products ----------------------------------------------
    def dealias(self, f: np.ndarray) -> np.ndarray:
        return self.ifft(self.fft(f) * self.dealias_mask)

    def product(self, *factors: np.ndarray) -> np.ndarray:
        """Pointwise product followed by 2/3-rule truncation (when enabled)."""
        out = factors[0]
        for f in factors[1:]:
            out = out * f
        return self.dealias(out) if self.dealias_products else out

    # -- elliptic inverses -------------------------------------------------
    def poisson_solve(self, g: np.ndarray, tol_mean: float = 1e-12) -> np.ndarray:
        """Zero-mean solution of ``Laplacian(phi) = g``.

        Raises NonZeroMean when ``|mean(g)| > tol_mean * max|g|``.
        """
        g = np.asarray(g, dtype=float)
        check_zero_mean(self, g, tol_mean, what="Poisson right-hand side")
        gh = self.fft(g)
        safe = np.where(self.k2 == 0.0, 1.0, self.k2)
        phih = np.where(self.k2 == 0.0, 0.0, -gh / safe)
        return self.ifft(phih)

    def helmholtz(self, m: np.ndarray):
        """Split ``m = v + V + grad(phi)``.

        Returns ``(v, V, phi)`` with v divergence-free and zero-mean, V the
        constant mean vector (shape ``(d,)``) and phi zero-mean.
        """
        mh = self.fft(m)
        V = np.array([self.mean(m[i]) for i in range(self.d)])
        kd2 = self.kd2
        safe = np.where(kd2 == 0.0, 1.0, kd2)
        phih = np.where(kd2 == 0.0, 0.0, -1j * np.sum(self.kd * mh, axis=0) / safe)
        gradh = 1j * self.kd * phih
        vh = mh - gradh
        vh[(slice(None),) + (0,) * self.d] = 0.0
        return self.ifft(vh), V, self.ifft(phih)

    # -- helpers -----------------------------------------------------------
    def constant_vector(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=float).reshape((self.d,) + (1,) * self.d)
        return np.broadcast_to(c, (self.d,) + self.shape).copy()

    def random_bandlimited(self, rng: np.random.Generator, kmax: int = 4,
                           prefix: tuple = (), zero_mean: bool = False) -> np.ndarray:
        """Random real field whose modes satisfy ``|m_i| <= kmax``."""
        if 2 * kmax >= self.n:
            raise ValueError("kmax must stay below the Nyquist index")
        spec_shape = prefix + self.modes.shape[1:]
        fh = rng.standard_normal(spec_shape) + 1j * rng.standard_normal(spec_shape)
        keep = np.all(np.abs(self.modes) <= kmax, axis=0)
        fh = fh * keep
        if zero_mean:
            fh[(Ellipsis,) + (0,) * self.d] = 0.0
        f = self.ifft(fh)
        scale = np.max(np.abs(f)) or 1.0
        return f / scale


def check_zero_mean(grid: Grid, f: np.ndarray, tol: float, what: str = "field",
                    error=NonZeroMean) -> float:
    """Return the relative mean defect of ``f``; raise ``error`` above ``tol``."""
    f = np.asarray(f)
    scale = float(np.max(np.abs(f))) if f.size else 0.0
    means = np.atleast_1d(grid.mean(f))
    defect = float(np.max(np.abs(means)))
    rel = defect / scale if scale > 0 else 0.0
    if rel > tol:
        raise error("%s has mean %.3e (relative %.3e > %.1e)" % (what, defect, rel, tol))
    return rel


# ---------------------------------------------------------------------------
# traceless symmetric tensors
# ---------------------------------------------------------------------------
_TENSOR0_INDEX = {
    2: (("T11", (0, 0)), ("T12", (0, 1))),
    3: (("T11", (0, 0)), ("T22", (1, 1)), ("T12", (0, 1)), ("T13", (0, 2)), ("T23", (1, 2))),
}


def tensor0_components(d: int) -> tuple:
    return tuple(name for name, _ in _TENSOR0_INDEX[d])


@dataclass
class SymTensor0:
    """Traceless symmetric d x d tensor field stored by independent entries.

    ``entries`` has shape ``(d(d+1)/2 - 1,) + spatial``; see
    :func:`tensor0_components` for the order. Symmetry and zero trace hold
    by construction of :meth:`full`.
    """

    d: int
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float)
        if self.entries.shape[0] != self.d * (self.d + 1) // 2 - 1:
            raise ValueError("wrong number of tensor entries for d=%d" % self.d)

    @classmethod
    def from_full(cls, t: np.ndarray) -> "SymTensor0":
        """Traceless symmetric part of a full tensor field ``t[i, j, ...]``."""
        d = t.shape[0]
        sym = 0.5 * (t + np.swapaxes(t, 0, 1))
        tr = sum(sym[i, i] for i in range(d))
        ent = []
        for _, (i, j) in _TENSOR0_INDEX[d]:
            ent.append(sym[i, j] - (tr / d if i == j else 0.0))
        return cls(d, np.stack(ent))

    @classmethod
    def zeros(cls, d: int, spatial: tuple) -> "SymTensor0":
        return cls(d, np.zeros((d * (d + 1) // 2 - 1,) + tuple(spatial)))

    def full(self) -> np.ndarray:
        d, e = self.d, self.entries
        out = np.empty((d, d) + e.shape[1:])
        if d == 2:
            out[0, 0], out[0, 1] = e[0], e[1]
            out[1, 0], out[1, 1] = e[1], -e[0]
        else:
            out[0, 0], out[1, 1], out[2, 2] = e[0], e[1], -e[0] - e[1]
            out[0, 1] = out[1, 0] = e[2]
            out[0, 2] = out[2, 0] = e[3]
            out[1, 2] = out[2, 1] = e[4]
        return out

    def sup_norm(self) -> float:
        """Max over points of the Frobenius norm."""
        f = self.full()
        return float(np.max(np.sqrt(np.sum(f**2, axis=(0, 1)))))

    def __add__(self, other):
        return SymTensor0(self.d, self.entries + other.entries)

    def __sub__(self, other):
        return SymTensor0(self.d, self.entries - other.entries)

    def __mul__(self, s):
        return SymTensor0(self.d, self.entries * s)

    __rmul__ = __mul__

    def __neg__(self):
        return SymTensor0(self.d, -self.entries)
