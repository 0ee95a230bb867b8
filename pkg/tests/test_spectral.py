import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carleman_lab import CausalityViolation, ConfigError, ProblemParams
from carleman_lab.frac_ops import frac_symbol, lambda_alpha_multiplier
from carleman_lab.spectral import (
    Axis,
    Field,
    GridSpec,
    PartitionSpec,
    anisotropic_norm,
    apply_multiplier,
    apply_P,
    apply_P_psi,
    apply_P_reference,
    apply_shifted_P,
    apply_shifted_z_operator,
    build_partition,
    smooth_step,
    spectral_derivative,
    weighted_mass,
)

P = ProblemParams()


def bump(s):
    return smooth_step(1.5 * (1 + s)) * smooth_step(1.5 * (1 - s))


def time_bump(t):
    return bump(2 * t - 1)


def txz_field(n=2, count=16, seed=0):
    grid = GridSpec.build(t=(-1.0, 3.0, count), x=[(-1.0, 2.0, count)] * n, z=(-1.0, 2.0, count))
    rng = np.random.default_rng(seed)
    c = rng.uniform(-0.1, 0.1, n + 1)

    def fn(t, z, **xs):
        out = time_bump(t) * bump((z - c[-1]) / 0.6)
        for j, x in enumerate(xs.values()):
            out = out * bump((x - c[j]) / 0.6)
        return out

    return Field.from_function(grid, fn)


class TestGrid:
    def test_power_of_two(self):
        with pytest.raises(ConfigError):
            Axis("t", 0.0, 1.0, 12)

    def test_duplicate_names(self):
        with pytest.raises(ConfigError):
            GridSpec((Axis("x1", 0, 1, 4), Axis("x1", 0, 1, 4)))

    def test_space_names_and_duals(self):
        g = GridSpec.build(t=(0, 1, 4), x=[(0, 1, 8), (0, 1, 8)], z=(0, 1, 2))
        assert g.space_names() == ["x1", "x2"]
        d = g.duals()
        assert d.tau.shape == (4, 1, 1, 1) and d.sigma.shape == (1, 1, 1, 2)
        assert g.refined().shape == (8, 16, 16, 4)

    def test_shape_mismatch(self):
        with pytest.raises(ConfigError):
            Field(GridSpec.build(x=[(0, 1, 4)]), np.zeros(8))


class TestTransforms:
    def test_round_trip(self):
        u = txz_field()
        back = u.to_fourier().to_physical()
        assert np.max(np.abs(back.samples - u.samples)) <= 1e-12 * np.max(np.abs(u.samples))

    def test_parseval(self):
        u = txz_field()
        assert weighted_mass(u, lambda d: 1.0) == pytest.approx(u.l2_mass(), rel=1e-12)

    def test_identity_multiplier(self):
        u = txz_field()
        out = apply_multiplier(u, lambda d: 1.0)
        assert np.allclose(out.samples, u.samples, atol=1e-14)

    def test_lambda_inverse_pair(self):
        u = txz_field()

        def lam(m):
            return lambda d: lambda_alpha_multiplier(0.5, m, d.tau, list(d.xi))

        out = apply_multiplier(apply_multiplier(u, lam(1.5)), lam(-1.5))
        assert np.max(np.abs(out.samples - u.samples)) <= 1e-10

    def test_derivative_theorem(self):
        grid = GridSpec.build(t=(0.0, 2 * np.pi, 64))
        u = Field.from_function(grid, lambda t: np.sin(t))
        out = apply_multiplier(u, lambda d: 1j * d.tau)
        assert np.max(np.abs(out.samples - np.cos(grid.coordinate("t")))) <= 1e-12
        d2 = spectral_derivative(u, "t", 2)
        assert np.max(np.abs(d2.samples + u.samples)) <= 1e-12

    def test_save_load(self, tmp_path):
        u = txz_field(n=1, count=8)
        path = u.save(tmp_path / "u.clf")
        back = Field.load(path)
        assert back.grid == u.grid and back.side == "physical"
        assert np.max(np.abs(back.samples - u.samples)) <= 1e-6
        meta = json.loads((tmp_path / "u.clf.json").read_text())
        assert meta["format"] == "CLF1" and [a["name"] for a in meta["axes"]] == ["t", "x1", "z"]
        f = u.to_fourier()
        assert Field.load(f.save(tmp_path / "f.clf")).side == "fourier"

    def test_load_rejects_foreign_file(self, tmp_path):
        (tmp_path / "bad").write_bytes(b"NOPE" + bytes(16))
        with pytest.raises(ConfigError):
            Field.load(tmp_path / "bad")


def tx_bump(n=2, nt=64, nx=32, width=0.1):
    grid = GridSpec.build(t=(-1.0, 4.0, nt), x=[(-1.0, 2.0, nx)] * n)

    def fn(t, **xs):
        out = np.exp(P.tau0 * t) * time_bump(t)
        for x in xs.values():
            out = out * np.exp(-x ** 2 / width)
        return out

    return Field.from_function(grid, fn)


class TestOperatorP:
    def test_zero(self):
        u = tx_bump()
        assert np.all(apply_P(P, u * 0).samples == 0)

    def test_causality(self):
        grid = GridSpec.build(t=(-1.0, 2.0, 16), x=[(-1.0, 2.0, 8)])
        u = Field.from_function(grid, lambda t, x1: np.exp(-t ** 2) + 0 * x1)
        with pytest.raises(CausalityViolation):
            apply_P(P.replace(n=1), u)

    def test_x_independent(self):
        grid = GridSpec.build(t=(-1.0, 3.0, 64), x=[(-1.0, 2.0, 8)] * 2)
        u = Field.from_function(grid, lambda t, x1, x2: time_bump(t) + 0 * x1 + 0 * x2)
        expected = apply_multiplier(u, lambda d: frac_symbol(P.alpha, P.tau0, d.tau))
        assert np.max(np.abs(apply_P(P, u).samples - expected.samples)) <= 1e-10

    @settings(max_examples=10, deadline=None)
    @given(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
           st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
    def test_linear(self, a, b):
        u, v = tx_bump(nt=16, nx=16), tx_bump(nt=16, nx=16) * tx_bump(nt=16, nx=16).samples
        lhs = apply_P(P, u * a + v * b).samples
        rhs = a * apply_P(P, u).samples + b * apply_P(P, v).samples
        assert np.max(np.abs(lhs - rhs)) <= 1e-9 * max(1.0, np.max(np.abs(rhs)))

    def test_dual_path_small(self):
        u = tx_bump(nt=128, nx=32)
        a, b = apply_P(P, u), apply_P_reference(P, u)
        assert np.linalg.norm(a.samples - b.samples) / np.linalg.norm(b.samples) <= 3e-2

    def test_reference_needs_t_zero(self):
        grid = GridSpec.build(t=(-0.9, 3.0, 16), x=[(-1.0, 2.0, 8)])
        with pytest.raises(ConfigError):
            apply_P_reference(P.replace(n=1), Field(grid, np.zeros(grid.shape)))


class TestOperatorPpsi:
    def test_zero(self):
        assert np.all(apply_P_psi(P, txz_field() * 0).samples == 0)

    def test_sigma_zero_slice(self):
        u = txz_field()
        out = apply_P_psi(P, u).to_fourier().samples[..., 0]
        ax = u.grid.index("z")
        dz = u.grid.axis("z").spacing
        slice_field = Field(GridSpec(u.grid.axes[:ax]), np.sum(u.samples, axis=ax) * dz)
        expected = apply_P(P, slice_field).to_fourier().samples
        assert np.max(np.abs(out - expected)) <= 1e-10 * np.max(np.abs(expected))

    def test_z_constant_input(self):
        base = tx_bump(nt=16, nx=16)
        grid = GridSpec(base.grid.axes + (Axis("z", -1.0, 2.0, 4),))
        u = Field(grid, np.repeat(base.samples[..., None], 4, axis=-1))
        out = apply_P_psi(P, u).samples
        expected = apply_P(P, base).samples[..., None]
        assert np.max(np.abs(out - expected)) <= 1e-10 * np.max(np.abs(expected))

    def test_sigma_shift_is_modulation(self):
        grid = GridSpec.build(t=(-1.0, 4.0, 16), x=[(-1.0, 2.0, 16)], z=(-1.0, 2.0, 64))
        u = Field.from_function(grid, lambda t, x1, z: time_bump(t) * np.exp(-(x1 ** 2 + z ** 2) / 0.05))
        beta = 2 * np.pi / 2.0 * 3  # a dual grid frequency
        z = u.grid.coordinate("z")
        mod = u * np.exp(1j * beta * z)
        a = apply_P_psi(P.replace(n=1), mod).samples * np.exp(-1j * beta * z)
        b = apply_P_psi(P.replace(n=1), u, sigma_shift=beta).samples
        assert np.max(np.abs(a - b)) <= 1e-8 * np.max(np.abs(b))


class TestShiftedP:
    def test_orderings_differ_by_beta_f(self):
        u = tx_bump(nt=16, nx=64, width=0.02)
        beta = 3.0
        comp = apply_shifted_P(P, u, beta, "composed").samples
        left = apply_shifted_P(P, u, beta, "left").samples
        f = 1 + 4 * u.grid.coordinate("x1") ** 2
        assert np.max(np.abs(comp - left - beta * f * u.samples)) <= 1e-9 * np.max(np.abs(comp))

    def test_beta_zero_is_P(self):
        u = tx_bump(nt=16, nx=32)
        assert np.allclose(apply_shifted_P(P, u, 0.0).samples, apply_P(P, u).samples, atol=1e-12)

    def test_unknown_ordering(self):
        with pytest.raises(ConfigError):
            apply_shifted_P(P, tx_bump(nt=16, nx=16), 1.0, "right")


class TestNorms:
    def test_unit_mode_at_origin(self):
        grid = GridSpec.build(t=(0.0, 1.0, 8), x=[(0.0, 1.0, 8)])
        u = Field(grid, np.ones(grid.shape))
        assert anisotropic_norm(u, 1.0, 2.0, squared=True) == pytest.approx(u.l2_mass(), rel=1e-12)

    def test_degenerate_convention(self):
        u = tx_bump(nt=16, nx=16)
        assert anisotropic_norm(u, 0.0, 0.0, squared=True) == pytest.approx(9 * u.l2_mass(), rel=1e-12)

    @given(st.floats(0, 3), st.floats(0, 3))
    @settings(max_examples=20, deadline=None)
    def test_dominates_l2(self, m, s):
        u = txz_field(n=1, count=8)
        assert anisotropic_norm(u, m, s, squared=True) >= u.l2_mass() * (1 - 1e-12)


class TestPartition:
    def test_sum_of_squares_and_homogeneity(self):
        for alpha in (0.25, 0.5, 0.75):
            pieces = build_partition(PartitionSpec(count=4, alpha=alpha))
            rng = np.random.default_rng(0)
            xi = rng.standard_normal((10_000, 2)) * 10 ** rng.uniform(-3, 3, (10_000, 1))
            tau = rng.standard_normal(10_000) * 10 ** rng.uniform(-3, 3, 10_000)
            sigma = rng.standard_normal(10_000) * 10 ** rng.uniform(-3, 3, 10_000)
            total = sum(p.evaluate(xi, tau, sigma) ** 2 for p in pieces)
            assert np.max(np.abs(total - 1)) <= 1e-12
            for p in pieces:
                a = p.evaluate(xi, tau, sigma)
                b = p.evaluate(2 * xi, 2 ** (2 / alpha) * tau, 2 * sigma)
                assert np.max(np.abs(a - b)) <= 1e-12

    def test_piece_zero_layout(self):
        pieces = build_partition(PartitionSpec())
        assert pieces[0].evaluate(np.array([1.0]), 0.0, 0.0) == 1.0
        assert abs(pieces[0].evaluate(np.array([0.0]), 0.0, 1.0)) <= 1e-15

    def test_piece_zero_support(self):
        spec = PartitionSpec(delta1=0.5)
        p0 = build_partition(spec)[0]
        # sigma^2 = 2.01 delta1 (|xi|^2 + |tau|^alpha) lies outside the support
        assert abs(p0.evaluate(np.array([1.0]), 0.0, np.sqrt(2.01 * 0.5))) <= 1e-15

    def test_as_multiplier(self):
        u = txz_field(n=1, count=8)
        pieces = build_partition(PartitionSpec(count=3))
        total = sum(weighted_mass(u, lambda d, p=p: p(d) ** 2) for p in pieces)
        assert total == pytest.approx(u.l2_mass(), rel=1e-12)

    @pytest.mark.parametrize("spec", [PartitionSpec(count=1), PartitionSpec(delta1=-1.0),
                                      PartitionSpec(overlap=0.0), PartitionSpec(alpha=1.0)])
    def test_invalid(self, spec):
        with pytest.raises(ConfigError):
            build_partition(spec)


class TestShiftedZ:
    def gaussian(self):
        grid = GridSpec.build(z=(-4.0, 8.0, 256))
        return Field(grid, np.exp(-grid.coordinate("z") ** 2).astype(complex))

    def test_identity(self):
        g = self.gaussian()
        out = apply_shifted_z_operator(g, 100.0, 0, 0, "raw")
        assert np.allclose(out.samples, g.samples, atol=1e-14)

    def test_gj_bounded_by_h1(self):
        g = self.gaussian()
        out = apply_shifted_z_operator(g, 1e4, 1, 0, "Gj")
        h1 = np.sqrt(g.l2_mass() + spectral_derivative(g, "z").l2_mass())
        assert out.norm() <= 1.01 * h1

    def test_raw_rate(self):
        g = self.gaussian()
        beta = 1e4
        h = (1 + beta ** 2) ** 0.25
        out = apply_shifted_z_operator(g, beta, 2, 0, "raw")
        assert (out - g * h ** 2).norm() / (h ** 2 * g.norm()) <= beta ** -0.5

    def test_hjk_mode(self):
        g = self.gaussian()
        out = apply_shifted_z_operator(g, 1e3, 1, 1, "Hjk")
        assert out.norm() < 0.1 * g.norm()

    def test_requires_z_grid(self):
        with pytest.raises(ConfigError):
            apply_shifted_z_operator(tx_bump(nt=16, nx=16), 1.0)
        with pytest.raises(ConfigError):
            apply_shifted_z_operator(self.gaussian(), 1.0, mode="weird")
