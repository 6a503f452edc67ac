import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import roughwave as rw
from roughwave.errors import (
    InvalidArgumentError,
    InvalidCoefficientError,
    UnsupportedConfigurationError,
)
from roughwave.fields import CoefficientField, PronyKernel, TabulatedKernel
from roughwave.operators import (
    MemoryOperator,
    acoustic_p_matrices,
    apply_memory,
    block_diagonal,
    energy,
    export_coo,
    max_symbol_speed,
    prony_advance,
)


def random_spd_field(n_cells, k, seed=0):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n_cells, k, k)))
    vals = 1.0 + rng.random((n_cells, k))
    a = np.einsum("cik,ck,cjk->cij", q, vals, q)
    a = 0.5 * (a + np.swapaxes(a, 1, 2))
    g = rw.build_grid(1, [n_cells], 1.0, 1e-3, 0.1)
    return CoefficientField(grid=g, k=k, a=a)


def fsum_dot(x, y):
    return math.fsum((np.asarray(x) * np.asarray(y)).tolist())


class TestMass:
    def test_identity_coefficients(self):
        f = CoefficientField(grid=rw.build_grid(1, [16], 1.0, 1e-3, 0.1), k=2,
                             a=np.tile(np.eye(2), (16, 1, 1)))
        m = rw.assemble_mass(f)
        u = np.arange(32.0)
        np.testing.assert_array_equal(m.apply(u), u)

    def test_acoustic_cell_block(self):
        # kappa = 4, rho = 1 maps to the cell block diag(0.25, 1, 1, 1)
        g = rw.build_grid(3, [2, 2, 2], 1.0, 1e-3, 0.01)
        model = rw.AcousticModel(grid=g, kappa=4.0, rho=1.0)
        m = rw.assemble_mass(model.coefficient_field())
        np.testing.assert_allclose(m.blocks[0], np.diag([0.25, 1.0, 1.0, 1.0]))

    def test_apply_solve_roundtrip(self):
        f = random_spd_field(30, 3, seed=5)
        m = rw.assemble_mass(f)
        rng = np.random.default_rng(1)
        u = rng.standard_normal(m.n_state)
        back = m.solve(m.apply(u))
        assert np.abs(back - u).max() <= 1e-12 * np.abs(u).max()

    def test_non_spd_names_cell(self):
        g = rw.build_grid(1, [8], 1.0, 1e-3, 0.1)
        a = np.tile(np.eye(2), (8, 1, 1))
        f = CoefficientField(grid=g, k=2, a=a)
        f.a[3] = np.diag([1.0, -1.0])  # corrupt after validation
        with pytest.raises(InvalidCoefficientError, match="cell 3"):
            rw.assemble_mass(f)

    def test_acoustic_spectrum_is_inverse_kappa_and_rho(self):
        g = rw.build_grid(1, [12], 1.0, 1e-3, 0.1)
        rng = np.random.default_rng(3)
        kappa = 1.0 + rng.random(12)
        rho = 0.5 + rng.random(12)
        m = rw.assemble_mass(rw.AcousticModel(grid=g, kappa=kappa, rho=rho).coefficient_field())
        eigs = np.sort(np.linalg.eigvalsh(m.blocks), axis=1)
        expect = np.sort(np.stack([1.0 / kappa, rho], axis=1), axis=1)
        np.testing.assert_allclose(eigs, expect, rtol=1e-13)

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=20, deadline=None)
    def test_rayleigh_quotients_within_bounds(self, seed):
        f = random_spd_field(20, 2, seed=seed)
        m = rw.assemble_mass(f)
        rng = np.random.default_rng(seed + 1)
        u = rng.standard_normal(m.n_state)
        q = float(u @ m.apply(u)) / float(u @ u)
        assert m.eig_lo - 1e-10 <= q <= m.eig_hi + 1e-10


class TestSkew:
    def test_1d_periodic_centered_difference_exact_antisymmetry(self):
        g = rw.build_grid(1, [32], 1.0, 1e-3, 0.1)
        sk = rw.assemble_skew([np.array([[1.0]])], g, "periodic")
        dense = sk.matrix.toarray()
        np.testing.assert_array_equal(dense, -dense.T)
        # interior stencil is the plain centered difference
        assert dense[5, 6] == pytest.approx(0.5 / g.h[0])
        assert dense[5, 4] == pytest.approx(-0.5 / g.h[0])

    def test_constant_state_in_kernel(self):
        g = rw.build_grid(2, [8, 8], 1.0, 1e-3, 0.1)
        sk = rw.assemble_skew(acoustic_p_matrices(2), g, "periodic")
        u = np.tile(np.array([3.0, -1.0, 2.0]), g.n_cells)
        assert np.abs(sk.apply(u)).max() == 0.0

    def test_plane_wave_symbol(self):
        # discrete Fourier modes are exact eigenvectors of the circulant
        # difference: eigenvalues +/- i sin(2 pi m h)/h for the k=2 pair
        g = rw.build_grid(1, [64], 1.0, 1e-3, 0.1)
        sk = rw.assemble_skew(acoustic_p_matrices(1), g, "periodic")
        x = g.axis_centers(0)
        for mode in (1, 5, 11):
            wave = np.exp(2j * np.pi * mode * x)
            for pol, lam_sign in ((np.array([1.0, -1.0]), +1), (np.array([1.0, 1.0]), -1)):
                state = (wave[:, None] * pol).ravel()
                out = sk.matrix @ state.real + 1j * (sk.matrix @ state.imag)
                lam = lam_sign * 1j * np.sin(2 * np.pi * mode * g.h[0]) / g.h[0]
                assert np.abs(out - lam * state).max() < 1e-11

    @pytest.mark.parametrize("boundary", ["periodic", "acoustic_free"])
    @pytest.mark.parametrize("dim,cells", [(1, [48]), (2, [12, 10])])
    def test_skew_symmetry_random_vectors(self, boundary, dim, cells):
        g = rw.build_grid(dim, cells, 1.0, 1e-3, 0.1)
        sk = rw.assemble_skew(acoustic_p_matrices(dim), g, boundary)
        rng = np.random.default_rng(42)
        for _ in range(10):
            u = rng.standard_normal(sk.n_state)
            v = rng.standard_normal(sk.n_state)
            s = abs(fsum_dot(sk.apply(u), v) + fsum_dot(u, sk.apply(v)))
            assert s <= 1e-12 * np.linalg.norm(u) * np.linalg.norm(v)

    def test_stored_matrix_exactly_antisymmetric(self):
        g = rw.build_grid(2, [9, 7], 1.0, 1e-3, 0.1)
        for boundary in ("periodic", "acoustic_free"):
            sk = rw.assemble_skew(acoustic_p_matrices(2), g, boundary)
            assert abs(sk.matrix + sk.matrix.T).max() == 0.0

    def test_rejects_asymmetric_symbol(self):
        g = rw.build_grid(1, [16], 1.0, 1e-3, 0.1)
        with pytest.raises(InvalidArgumentError):
            rw.assemble_skew([np.array([[0.0, 1.0], [0.0, 0.0]])], g)

    def test_acoustic_free_requires_acoustic_structure(self):
        g = rw.build_grid(1, [16], 1.0, 1e-3, 0.1)
        with pytest.raises(UnsupportedConfigurationError):
            rw.assemble_skew([np.array([[1.0]])], g, "acoustic_free")

    def test_coo_export(self, tmp_path):
        g = rw.build_grid(1, [8], 1.0, 1e-3, 0.1)
        sk = rw.assemble_skew([np.array([[1.0]])], g, "periodic")
        path = tmp_path / "p.coo"
        export_coo(sk, path)
        rows = [line.split() for line in path.read_text().splitlines()[1:]]
        rebuilt = np.zeros((8, 8))
        for r, c, v in rows:
            rebuilt[int(r), int(c)] = float(v)
        np.testing.assert_array_equal(rebuilt, sk.matrix.toarray())


class TestMemory:
    def test_zero_kernel(self):
        g = rw.build_grid(1, [8], 1.0, 1e-2, 0.2)
        op = MemoryOperator(kernel=rw.ZeroKernel(), grid=g, k=1)
        hist = np.ones((21, 8))
        assert np.abs(apply_memory(op, hist, 20, 1e-2)).max() == 0.0

    def test_prony_step_response_closed_form(self):
        # q = exp(-t) I, u = 1 for t >= 0: R(t) = 1 - exp(-t), exact for the
        # recursion at grid times
        g = rw.build_grid(1, [4], 1.0, 0.01, 1.0)
        op = MemoryOperator(kernel=PronyKernel(weights=(np.ones((4, 1, 1)),), taus=(1.0,)),
                            grid=g, k=1)
        hist = np.ones((101, 4))
        for idx in (10, 50, 100):
            r = apply_memory(op, hist, idx, 0.01)
            assert r[0] == pytest.approx(1.0 - np.exp(-0.01 * idx), abs=1e-13)

    def test_tabulated_matches_prony_second_order(self):
        g = rw.build_grid(1, [4], 1.0, 0.01, 1.0)
        prony = MemoryOperator(kernel=PronyKernel(weights=(np.ones((4, 1, 1)),), taus=(1.0,)),
                               grid=g, k=1)
        errs, dts = [], [0.04, 0.02, 0.01]
        rng = np.random.default_rng(0)
        for dt in dts:
            m = int(round(0.6 / dt))
            t = dt * np.arange(m + 1)
            hist = np.sin(3 * t)[:, None] * np.ones((1, 4))
            tab = MemoryOperator(
                kernel=TabulatedKernel(times=dt * np.arange(2 * m + 1),
                                       samples=np.exp(-dt * np.arange(2 * m + 1))[:, None, None, None]
                                       * np.ones((1, 4, 1, 1))),
                grid=g, k=1)
            r1 = apply_memory(prony, hist, m, dt)
            r2 = apply_memory(tab, hist, m, dt)
            errs.append(np.abs(r1 - r2).max())
        slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
        assert slope >= 1.9

    def test_causality_wrt_future_history(self):
        g = rw.build_grid(1, [4], 1.0, 0.01, 1.0)
        op = MemoryOperator(kernel=PronyKernel(weights=(np.ones((4, 1, 1)),), taus=(0.5,)),
                            grid=g, k=1)
        rng = np.random.default_rng(1)
        hist = rng.standard_normal((40, 4))
        r = apply_memory(op, hist, 20, 0.01)
        hist2 = hist.copy()
        hist2[21:] = 99.0
        r2 = apply_memory(op, hist2, 20, 0.01)
        np.testing.assert_array_equal(r, r2)

    def test_insufficient_history(self):
        g = rw.build_grid(1, [4], 1.0, 0.01, 1.0)
        op = MemoryOperator(kernel=rw.ZeroKernel(), grid=g, k=1)
        with pytest.raises(InvalidArgumentError, match="insufficient history"):
            apply_memory(op, np.zeros((5, 4)), 10, 0.01)


class TestPronyAdvance:
    def test_zero_history(self):
        aux = [np.zeros(6)]
        out = prony_advance(aux, np.zeros(6), np.zeros(6), 0.01, [1.0])
        assert np.abs(out[0]).max() == 0.0

    def test_geometric_closed_form(self):
        aux = [np.zeros(3)]
        dt, n = 0.02, 80
        for _ in range(n):
            aux = prony_advance(aux, np.ones(3), np.ones(3), dt, [1.0])
        assert aux[0][0] == pytest.approx(1.0 - np.exp(-n * dt), abs=1e-13)

    def test_converges_to_continuous_convolution(self):
        # fine-trapezoid oracle for s(t) = int exp(-(t-s)/tau) u(s) ds
        tau, t_end = 0.3, 0.5
        u_fn = lambda t: np.cos(4 * t)
        s_fine = np.linspace(0, t_end, 20001)
        oracle = np.trapezoid(np.exp(-(t_end - s_fine) / tau) * u_fn(s_fine), s_fine)
        errs, dts = [], [0.01, 0.005, 0.0025]
        for dt in dts:
            n = int(round(t_end / dt))
            aux = [np.zeros(1)]
            for i in range(n):
                aux = prony_advance(aux, np.array([u_fn(i * dt)]),
                                    np.array([u_fn((i + 1) * dt)]), dt, [tau])
            errs.append(abs(aux[0][0] - oracle))
        assert errs[-1] < errs[0]
        assert errs[-1] < 5e-6

    def test_rejects_bad_tau(self):
        with pytest.raises(InvalidArgumentError):
            prony_advance([np.zeros(2)], np.zeros(2), np.zeros(2), 0.01, [0.0])


class TestEnergy:
    def test_zero_state(self):
        f = random_spd_field(10, 2)
        m = rw.assemble_mass(f)
        assert energy(m, np.zeros(m.n_state)) == 0.0

    def test_one_cell_acoustic_example(self):
        # kappa = rho = 1, p = 2, v = 0, unit cell volume: E = 2
        g = rw.build_grid(1, [2], 2.0, 1e-3, 0.1)  # h = 1 per cell
        model = rw.AcousticModel(grid=g, kappa=1.0, rho=1.0)
        m = rw.assemble_mass(model.coefficient_field())
        u = np.zeros(m.n_state)
        u[0] = 2.0  # pressure in the first cell
        assert energy(m, u) == pytest.approx(2.0)

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=20, deadline=None)
    def test_energy_norm_equivalence(self, seed):
        f = random_spd_field(16, 2, seed=seed)
        m = rw.assemble_mass(f)
        rng = np.random.default_rng(seed)
        u = rng.standard_normal(m.n_state)
        norm2 = m.grid.cell_volume * float(u @ u)
        e = energy(m, u)
        assert 0.5 * f.c_lo * norm2 - 1e-12 <= e <= 0.5 * f.c_hi * norm2 + 1e-12

    def test_dimension_mismatch(self):
        f = random_spd_field(10, 2)
        m = rw.assemble_mass(f)
        with pytest.raises(InvalidArgumentError):
            energy(m, np.zeros(7))


class TestSymbolSpeed:
    def test_advection_speed(self):
        g = rw.build_grid(1, [16], 1.0, 1e-3, 0.1)
        c = 2.5
        f = CoefficientField(grid=g, k=1, a=np.full((16, 1, 1), 1.0 / c))
        system = rw.assemble_system(f, [np.array([[-1.0]])])
        assert max_symbol_speed(system) == pytest.approx(c, rel=1e-12)

    def test_acoustic_speed(self):
        g = rw.build_grid(2, [6, 6], 1.0, 1e-3, 0.1)
        model = rw.AcousticModel(grid=g, kappa=4.0, rho=1.0)
        system = rw.acoustics_system(model)
        assert max_symbol_speed(system) == pytest.approx(2.0, rel=1e-6)

    def test_block_diagonal_layout(self):
        blocks = np.arange(8.0).reshape(2, 2, 2)
        m = block_diagonal(blocks).toarray()
        np.testing.assert_array_equal(m[:2, :2], blocks[0])
        np.testing.assert_array_equal(m[2:, 2:], blocks[1])
        assert m[0, 2] == 0
