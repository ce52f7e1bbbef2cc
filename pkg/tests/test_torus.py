import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from awrascle.errors import NonZeroMean
from awrascle.torus import Grid, SymTensor0, pairwise_sum, tensor0_components


class TestGrid:
    def test_coordinates_and_wavenumbers(self):
        g = Grid(2, 8)
        assert g.x1d[0] == -1.0
        assert np.allclose(np.diff(g.x1d), 0.25)
        assert g.volume == 4.0
        # k = pi m; the Nyquist index is zeroed only in kd
        assert np.isclose(np.max(np.abs(g.k)), 4 * np.pi)
        assert np.max(np.abs(g.kd)) < 4 * np.pi

    def test_rejects_odd_resolution(self):
        with pytest.raises(ValueError):
            Grid(2, 7)

    def test_fft_roundtrip(self, grid, rng):
        f = rng.standard_normal(grid.shape)
        assert np.allclose(grid.ifft(grid.fft(f)), f, atol=1e-13)


class TestDerivatives:
    def test_gradient_of_trig_monomial(self, grid):
        x = grid.coords
        f = np.sin(np.pi * x[0]) * np.cos(2 * np.pi * x[1])
        gr = grid.grad(f)
        assert np.allclose(gr[0], np.pi * np.cos(np.pi * x[0]) * np.cos(2 * np.pi * x[1]), atol=1e-11)
        assert np.allclose(gr[1], -2 * np.pi * np.sin(np.pi * x[0]) * np.sin(2 * np.pi * x[1]),
                           atol=1e-11)

    def test_laplacian_eigenfunction(self, grid):
        x = grid.coords
        f = np.cos(3 * np.pi * x[-1])
        assert np.allclose(grid.laplacian(f), -9 * np.pi**2 * f, atol=1e-9)

    def test_div_of_curl_vanishes(self, grid, rng):
        psi = grid.random_bandlimited(rng, kmax=4)
        v = np.zeros((grid.d,) + grid.shape)
        v[0], v[1] = grid.partial(psi, 1), -grid.partial(psi, 0)
        assert np.max(np.abs(grid.div(v))) < 1e-11

    def test_div_grad_equals_laplacian(self, grid, rng):
        f = grid.random_bandlimited(rng, kmax=5)
        assert np.allclose(grid.div(grid.grad(f)), grid.laplacian(f), atol=1e-9)

    def test_row_divergence_convention(self, grid):
        x = grid.coords
        a = np.stack([np.sin(np.pi * x[i]) for i in range(grid.d)])
        b = np.stack([np.cos(np.pi * x[(i + 1) % grid.d]) for i in range(grid.d)])
        t = a[:, None] * b[None, :]
        expect = np.stack([sum(grid.partial(a[j] * b[i], i) for i in range(grid.d))
                           for j in range(grid.d)])
        assert np.allclose(grid.div_tensor(t), expect, atol=1e-11)


class TestQuadrature:
    def test_integrate_resolved_mode(self, grid):
        x = grid.coords
        assert abs(grid.integrate(np.sin(np.pi * x[0]) ** 2) - grid.volume / 2) < 1e-12

    def test_parseval(self, grid, rng):
        f = rng.standard_normal(grid.shape)
        assert np.isclose(grid.l2_norm(f), grid.spectral_l2_norm(f), rtol=1e-12)

    def test_pairwise_sum_is_order_insensitive_for_layout(self, rng):
        a = rng.standard_normal((3, 16, 16))
        assert np.allclose(pairwise_sum(a, 2), a.sum(axis=(1, 2)), rtol=1e-13)


class TestEllipticInverses:
    def test_poisson_roundtrip(self, grid, rng):
        phi = grid.random_bandlimited(rng, kmax=5, zero_mean=True)
        back = grid.poisson_solve(grid.laplacian(phi))
        assert np.max(np.abs(back - phi)) / np.max(np.abs(phi)) < 1e-10

    def test_poisson_rejects_mean(self, grid):
        with pytest.raises(NonZeroMean):
            grid.poisson_solve(np.ones(grid.shape))

    def test_helmholtz_parts(self, grid, rng):
        m = grid.random_bandlimited(rng, kmax=5, prefix=(grid.d,))
        v, V, phi = grid.helmholtz(m)
        back = v + V.reshape((grid.d,) + (1,) * grid.d) + grid.grad(phi)
        assert np.max(np.abs(back - m)) < 1e-12
        assert np.max(np.abs(grid.div(v))) < 1e-10
        assert np.max(np.abs(grid.mean(v))) < 1e-14
        assert abs(grid.mean(phi)) < 1e-14
        assert np.allclose(V, grid.mean(m), atol=1e-15)

    def test_helmholtz_of_gradient_is_gradient(self, grid, rng):
        phi = grid.random_bandlimited(rng, kmax=4, zero_mean=True)
        v, V, phi2 = grid.helmholtz(grid.grad(phi))
        assert np.max(np.abs(v)) < 1e-12
        assert np.allclose(phi2, phi, atol=1e-12)


class TestDealiasing:
    def test_product_truncates_high_modes(self):
        g = Grid(2, 16)
        x = g.coords
        f = np.cos(5 * np.pi * x[0])
        prod = g.product(f, f)          # cos^2 = (1 + cos 10 pi x)/2, mode 10 is removed
        assert np.allclose(prod, 0.5, atol=1e-13)

    def test_product_keeps_resolved_modes(self, grid):
        x = grid.coords
        f = np.sin(np.pi * x[0])
        assert np.allclose(grid.product(f, f), f * f, atol=1e-13)


class TestSymTensor0:
    @pytest.mark.parametrize("d", [2, 3])
    def test_full_is_traceless_and_symmetric(self, d, rng):
        t = rng.standard_normal((d, d, 4, 4))
        s = SymTensor0.from_full(t).full()
        assert np.allclose(np.trace(s), 0.0, atol=1e-14)
        assert np.allclose(s, np.swapaxes(s, 0, 1))
        assert len(tensor0_components(d)) == d * (d + 1) // 2 - 1

    def test_projection_is_idempotent(self, rng):
        t = rng.standard_normal((3, 3, 5))
        s = SymTensor0.from_full(t)
        assert np.allclose(SymTensor0.from_full(s.full()).entries, s.entries)

    def test_arithmetic(self, rng):
        a = SymTensor0(2, rng.standard_normal((2, 3)))
        b = SymTensor0(2, rng.standard_normal((2, 3)))
        assert np.allclose((a - b + b).entries, a.entries)
        assert np.allclose((2 * a).entries, (a * 2).entries)
        assert np.allclose((-a).entries, -a.entries)

    def test_wrong_entry_count(self):
        with pytest.raises(ValueError):
            SymTensor0(3, np.zeros((2, 4)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([(2, 16), (3, 8)]))
def test_helmholtz_orthogonality(seed, dn):
    g = Grid(*dn)
    m = g.random_bandlimited(np.random.default_rng(seed), kmax=dn[1] // 2 - 1, prefix=(g.d,))
    v, _, phi = g.helmholtz(m)
    inner = float(g.integrate(np.sum(v * g.grad(phi), axis=0)))
    assert abs(inner) < 1e-10
