import numpy as np
import pytest
from hypothesis import given, strategies as st

from carleman_lab import ConfigError, ProblemParams, SupportViolation
from carleman_lab.geometry import CutoffSpec, evaluate_cutoff, holmgren_map, prepare_localized_field
from carleman_lab.spectral import Axis, Field, GridSpec, smooth_step

P = ProblemParams()


class TestHolmgren:
    def test_origin(self):
        xp, xn, t = holmgren_map(P, np.zeros(1), 0.0, P.T)
        assert np.all(xp == 0) and xn == 0 and t == P.T

    def test_unit_offset(self):
        _, xn, _ = holmgren_map(P, [1.0], 0.0, P.T, y_hat=[0.0])
        assert xn == 1.0

    def test_time_shift(self):
        _, xn, _ = holmgren_map(P, np.zeros(1), 0.0, 0.0)
        assert xn == pytest.approx(-0.1, abs=1e-15)

    def test_y_hat_translation(self):
        xp, xn, _ = holmgren_map(P, [0.3], 0.2, 0.5, y_hat=[0.3])
        assert xp[0] == 0.0 and xn == pytest.approx(0.2 + 0.1 * (0.5 - 1.0))

    def test_round_trip_random(self):
        rng = np.random.default_rng(0)
        yp = rng.uniform(-1, 1, (1000, 2))
        yn, t = rng.uniform(-1, 1, 1000), rng.uniform(0, 1, 1000)
        p3 = P.replace(n=3)
        xp, xn, _ = holmgren_map(p3, yp, yn, t)
        bp, bn, _ = holmgren_map(p3, xp, xn, t, direction="inverse")
        assert max(np.max(np.abs(bp - yp)), np.max(np.abs(bn - yn))) <= 1e-12

    def test_list_components(self):
        xs, xn, _ = holmgren_map(P, [np.array([0.5])], np.array([0.1]), np.array([1.0]))
        assert isinstance(xs, list) and xn[0] == pytest.approx(0.35)

    def test_bad_direction(self):
        with pytest.raises(ConfigError):
            holmgren_map(P, [0.0], 0.0, 0.0, direction="sideways")


class TestCutoffs:
    def test_chi_plateaus(self):
        chi = CutoffSpec.chi(P)
        assert evaluate_cutoff(chi, 0.0) == 1.0
        assert evaluate_cutoff(chi, P.X / 2) == 1.0
        assert evaluate_cutoff(chi, P.X) == 0.0

    def test_theta_plateaus(self):
        theta = CutoffSpec.theta(P)
        assert evaluate_cutoff(theta, P.T - P.eps) == 1.0
        assert evaluate_cutoff(theta, P.T - P.eps / 2) == 0.0

    def test_kappa_plateaus(self):
        kappa = CutoffSpec.kappa(P)
        assert evaluate_cutoff(kappa, -2 * P.l / 3) == 0.0
        assert evaluate_cutoff(kappa, -P.l / 3) == 1.0

    @pytest.mark.parametrize("make", [CutoffSpec.theta, CutoffSpec.kappa, CutoffSpec.chi])
    def test_monotone_and_flat_edges(self, make):
        spec = make(P)
        s = np.linspace(spec.lo, spec.hi, 2001)
        v = evaluate_cutoff(spec, s)
        steps = np.diff(v)
        assert np.all(steps <= 0) if spec.left == 1.0 else np.all(steps >= 0)
        assert np.all((v >= 0) & (v <= 1))
        h = 1e-3 * (spec.hi - spec.lo)
        for edge in (spec.lo, spec.hi):
            d1 = (evaluate_cutoff(spec, edge + h) - evaluate_cutoff(spec, edge - h)) / (2 * h)
            d2 = (evaluate_cutoff(spec, edge + h) - 2 * evaluate_cutoff(spec, edge)
                  + evaluate_cutoff(spec, edge - h)) / h ** 2
            assert abs(d1) < 1e-100 and abs(d2) < 1e-100

    def test_invalid_spec(self):
        with pytest.raises(ConfigError):
            CutoffSpec("theta", 1.0, 0.0, 1.0)
        with pytest.raises(ConfigError):
            CutoffSpec("omega", 0.0, 1.0, 1.0)

    @given(st.floats(-10, 10))
    def test_scalar_in_scalar_out(self, s):
        assert isinstance(evaluate_cutoff(CutoffSpec.chi(P), s), float)


def _y_field(p, fn, nt=32, ny=64):
    axes = [Axis("t", 0.0, 1.0, nt)]
    axes += [Axis(f"y{j}", -0.5, 1.0, ny) for j in range(1, p.n)]
    axes += [Axis(f"y{p.n}", -0.25, 1.0, ny)]
    return Field.from_function(GridSpec(tuple(axes)), fn)


def _bump(s):
    return smooth_step(1.5 * (1 + s)) * smooth_step(1.5 * (1 - s))


class TestLocalization:
    def test_zero_in_zero_out(self):
        u = _y_field(P, lambda **c: 0.0 * c["t"])
        out = prepare_localized_field(P, u)
        assert np.all(out.samples == 0)

    def test_default_grid_renames_axes(self):
        u = _y_field(P, lambda **c: 0.0 * c["t"])
        out = prepare_localized_field(P, u)
        assert out.grid.names == ["t", "x1", "x2"]

    def test_support_violation(self):
        u = _y_field(P, lambda t, y1, y2: _bump((t - 0.5) / 0.3) * _bump(y2 / 0.2) + 0 * y1)
        with pytest.raises(SupportViolation):
            prepare_localized_field(P, u)

    def test_support_and_causality(self):
        u = _y_field(P, lambda t, y1, y2: _bump((t - 0.45) / 0.4) * _bump((y2 - 0.2) / 0.15)
                     * _bump(y1 / 0.3))
        xg = GridSpec((Axis("t", -1.0, 2.0, 64), Axis("x1", -0.5, 1.0, 64),
                       Axis("x2", -0.5, 1.0, 128)))
        out = prepare_localized_field(P, u, xg)
        t, xn = xg.coordinate("t"), xg.coordinate("x2")
        mag = np.abs(out.samples)
        assert np.all(mag[np.broadcast_to(t <= 0, mag.shape)] == 0)
        assert np.max(mag[np.broadcast_to(xn < -P.X, mag.shape)], initial=0.0) == 0.0
        assert mag.max() > 0.1

    def test_conjugation_amplitude(self):
        p = P.replace(n=1)
        u = Field.from_function(
            GridSpec((Axis("t", 0.0, 1.0, 16), Axis("y1", -0.25, 1.0, 64))),
            lambda t, y1: _bump((t - 0.45) / 0.4) * _bump((y1 - 0.3) / 0.2))
        xg = GridSpec((Axis("t", 0.0, 1.0, 16), Axis("x1", -0.25, 1.0, 64)))
        out = prepare_localized_field(p, u, xg)
        k, j = 8, 40
        t = xg.axis("t").points[k]
        y = xg.axis("x1").points[j] - p.X / p.T * (t - p.T)
        expected = _bump((t - 0.45) / 0.4) * _bump((y - 0.3) / 0.2) * np.exp(p.tau0 * t)
        assert out.samples[k, j] == pytest.approx(expected, rel=5e-3)

    def test_exact_zero_zone_preserved(self):
        p = P.replace(n=1)
        grid = GridSpec((Axis("t", 0.0, 1.0, 32), Axis("y1", 0.0, 1.0, 128)))
        u = Field.from_function(grid, lambda t, y1: _bump((t - 0.45) / 0.4)
                                * smooth_step((y1 - 0.3) / 0.1) * (1 - smooth_step((y1 - 0.6) / 0.1)))
        out = prepare_localized_field(p, u)
        xn = out.grid.coordinate("x1")
        zone = np.broadcast_to(xn <= p.X / 4, out.grid.shape)
        assert np.all(out.samples[zone] == 0)

    def test_wrong_dimension(self):
        u = _y_field(P, lambda **c: 0.0 * c["t"])
        with pytest.raises(ConfigError):
            prepare_localized_field(P.replace(n=3), u)
