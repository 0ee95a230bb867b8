import math

import numpy as np
import pytest

from carleman_lab import ConfigError, ProblemParams, SolveFailure, SupportViolation
from carleman_lab.cli import mms_convergence, ucp_field, ucp_grid
from carleman_lab.spectral import Axis, Field, GridSpec, smooth_step
from carleman_lab.ucp import (
    LOCALITY_TOL,
    ForwardProblem,
    solve_forward,
    solve_forward_array,
    ucp_experiment,
)

P1 = ProblemParams(n=1)


def line(count=64):
    return (Axis("y1", 0.0, P1.l, count),)


def ramp(t, y):
    return smooth_step(4 * t) * np.sin(np.pi * y / P1.l)


class TestForward:
    def test_zero(self):
        _, values = solve_forward_array(ForwardProblem(P1, line()), 0.1, 10)
        assert np.all(values == 0)

    def test_zero_2d(self):
        p = ProblemParams()
        space = (Axis("y1", 0.0, 1.0, 8), Axis("y2", 0.0, 1.0, 8))
        _, values = solve_forward_array(ForwardProblem(p, space), 0.1, 4)
        assert values.shape == (5, 9, 9) and np.all(values == 0)

    @pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
    def test_mms_order(self, alpha):
        result = mms_convergence(P1.replace(alpha=alpha), 1024)
        assert abs(result["order"] - (2 - alpha)) <= 0.2
        assert result["max_error"][-1] < result["max_error"][0]

    def test_sine_mode_invariance(self):
        problem = ForwardProblem(P1, line(), forcing=ramp)
        _, values = solve_forward_array(problem, 1 / 32, 32)
        mode = np.sin(np.pi * problem.nodes()[0] / P1.l)
        for v in values[1:]:
            amp = v @ mode / (mode @ mode)
            assert np.max(np.abs(v - amp * mode)) <= 1e-8 * np.max(np.abs(v))

    def test_causality(self):
        dt, steps, k = 1 / 32, 32, 12

        def late(t, y):
            return ramp(t, y) + (t > k * dt) * np.cos(3 * y)

        _, a = solve_forward_array(ForwardProblem(P1, line(), forcing=ramp), dt, steps)
        _, b = solve_forward_array(ForwardProblem(P1, line(), forcing=late), dt, steps)
        assert np.array_equal(a[: k + 1], b[: k + 1])
        assert not np.array_equal(a[k + 1], b[k + 1])

    def test_dissipative(self):
        nodes = line()[0].start + line()[0].spacing * np.arange(65)
        problem = ForwardProblem(P1, line(), initial=nodes * (P1.l - nodes) * np.exp(nodes))
        _, values = solve_forward_array(problem, 1 / 64, 64)
        norms = np.linalg.norm(values, axis=1)
        assert np.all(np.diff(norms) <= 1e-14 * norms[0])
        assert norms[-1] < norms[0]

    def test_coefficients(self):
        # constant b and c: transport and reaction move the MMS forcing off target
        problem = ForwardProblem(P1, line(), b=lambda t, y: (0.5 + 0 * y,),
                                 c=lambda t, y: -1.0 + 0 * y, forcing=ramp)
        _, values = solve_forward_array(problem, 1 / 16, 16)
        assert np.all(np.isfinite(values)) and np.max(np.abs(values[-1])) > 0

    def test_boundary_data(self):
        problem = ForwardProblem(P1, line(8), boundary=lambda t, y: t + 0 * y)
        times, values = solve_forward_array(problem, 0.25, 4)
        assert np.allclose(values[:, 0], times) and np.allclose(values[:, -1], times)

    def test_singular_system(self):
        # one interior node; pick c so the scalar system is exactly zero
        axis = Axis("y1", 0.0, 64.0, 2)
        dt = 0.25
        scale = dt ** (-P1.alpha) / math.gamma(2 - P1.alpha)
        lap = -2.0 / axis.spacing ** 2
        c = scale - lap
        assert scale - (lap + c) == 0
        with pytest.raises(SolveFailure):
            solve_forward_array(ForwardProblem(P1, (axis,), c=lambda t, y: c + 0 * y), dt, 2)

    def test_non_finite(self):
        with pytest.raises(SolveFailure):
            solve_forward_array(ForwardProblem(P1, line(8), forcing=lambda t, y: np.nan + 0 * y),
                                0.25, 2)

    def test_bad_config(self):
        with pytest.raises(ConfigError):
            solve_forward_array(ForwardProblem(P1, line()), 0.0, 4)
        with pytest.raises(ConfigError):
            solve_forward(ForwardProblem(P1, line()), 0.3)
        with pytest.raises(ConfigError):
            ForwardProblem(ProblemParams(n=2), line())

    def test_field_layout(self):
        u = solve_forward(ForwardProblem(P1, line(), forcing=ramp), 1 / 16)
        assert u.grid.names == ["t", "y1"] and u.samples.shape == (16, 64)
        assert np.all(u.samples[0] == 0)


@pytest.fixture(scope="module")
def demo_field():
    return ucp_field(P1, 64, 1024)


@pytest.fixture(scope="module")
def demo_grid():
    return ucp_grid(P1, 64, 1024)


class TestUcp:
    betas = [50.0, 100.0, 200.0, 400.0]

    def test_trivial(self, demo_field, demo_grid):
        report = ucp_experiment(P1, demo_field * 0, self.betas, demo_grid)
        assert report.unweighted_interior == 0 and report.c_u == 0
        assert all(v == 0 for v in report.weighted_interior + report.bound)
        assert report.fitted_exponent is None and report.passed

    def test_zero_zone(self, demo_grid):
        u = ucp_field(P1, 64, 1024, y_star=0.15)
        report = ucp_experiment(P1, u, self.betas, demo_grid)
        assert report.unweighted_interior == 0.0
        assert all(v == 0.0 for v in report.weighted_interior)

    def test_decay_exponent(self, demo_field, demo_grid):
        report = ucp_experiment(P1, demo_field, self.betas, demo_grid)
        assert report.fitted_exponent <= -0.8 * 5 * P1.X ** 2 / 16
        assert report.passed
        mass = report.interior_mass
        assert all(b < a for a, b in zip(mass, mass[1:]))

    def test_commutator_locality(self, demo_field, demo_grid):
        report = ucp_experiment(P1, demo_field, self.betas[:2], demo_grid)
        assert report.commutator_leak <= LOCALITY_TOL

    def test_weight_ordering(self):
        X = P1.X
        xn = np.linspace(-1.0, 1.0, 4097)
        psi = 0.5 * (xn - X) ** 2
        for beta in (1.0, 50.0, 400.0):
            w = np.exp(2 * beta * psi)
            inner, zone = xn <= X / 4, (xn > X / 2) & (xn <= X)
            assert np.all(w[inner] >= math.exp(9 * beta * X ** 2 / 16))
            assert np.all(w[zone] <= math.exp(beta * X ** 2 / 4))

    def test_support_violation(self, demo_grid):
        grid = GridSpec((Axis("t", 0.0, 1.0, 16), Axis("y1", 0.0, 1.0, 64)))
        with pytest.raises(SupportViolation):
            ucp_experiment(P1, Field(grid, np.ones(grid.shape, complex)), self.betas, demo_grid)

    def test_serialization(self, demo_field, demo_grid):
        report = ucp_experiment(P1, demo_field, self.betas, demo_grid)
        lines = report.to_csv().splitlines()
        assert lines[0] == "beta,interior_mass,bound,ratio" and len(lines) == 5
        summary = report.summary()
        assert summary["target_exponent"] == pytest.approx(5 * P1.X ** 2 / 16)
        assert summary["pass"] is True
