"""Forward solver for the time-fractional equation and the continuation experiment."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .carleman import carleman_ratio, loglog_slope
from .errors import ConfigError, SolveFailure
from .frac_ops import l1_weights
from .geometry import CutoffSpec, evaluate_cutoff, prepare_localized_field
from .params import ProblemParams
from .spectral import Axis, Field, GridSpec, apply_P

__all__ = [
    "ForwardProblem",
    "solve_forward",
    "solve_forward_array",
    "UcpReport",
    "ucp_experiment",
    "LOCALITY_TOL",
]

LOCALITY_TOL = 1e-10


@dataclass
class ForwardProblem:
    """``d_t^alpha u - Delta u = b . grad u + c u + f`` on a box.

    Each space axis ``a`` spans the nodes ``a.start + k * a.spacing`` for
    ``k = 0..a.count``; the two end nodes carry Dirichlet data. Coefficient,
    forcing and boundary callables take ``(t, y_1, ..., y_n)`` with arrays
    broadcast over the node grid; ``b`` returns ``n`` component arrays.
    """

    params: ProblemParams
    space: tuple
    b: Callable | None = None
    c: Callable | None = None
    forcing: Callable | None = None
    boundary: Callable | None = None
    initial: np.ndarray | None = None

    def __post_init__(self):
        self.space = tuple(self.space)
        if len(self.space) != self.params.n:
            raise ConfigError(f"space has {len(self.space)} axes, params.n={self.params.n}")
        for axis in self.space:
            if not isinstance(axis, Axis):
                raise ConfigError("space axes must be Axis instances")

    @property
    def node_shape(self) -> tuple:
        return tuple(a.count + 1 for a in self.space)

    def nodes(self) -> list:
        """Broadcastable node coordinates, boundary nodes included."""
        n = len(self.space)
        out = []
        for j, a in enumerate(self.space):
            shape = [1] * n
            shape[j] = a.count + 1
            out.append((a.start + a.spacing * np.arange(a.count + 1)).reshape(shape))
        return out


def _difference_matrices(axis: Axis):
    m, h = axis.count + 1, axis.spacing
    second = sparse.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(m, m), format="lil") / h ** 2
    first = sparse.diags([-1.0, 1.0], [-1, 1], shape=(m, m), format="lil") / (2.0 * h)
    for mat in (second, first):
        mat[0, :] = 0.0
        mat[m - 1, :] = 0.0
    return second.tocsr(), first.tocsr()


def _kron_along(mat, j, sizes):
    out = None
    for k, size in enumerate(sizes):
        factor = mat if k == j else sparse.identity(size, format="csr")
        out = factor if out is None else sparse.kron(out, factor, format="csr")
    return out


def _interior_mask(shape):
    mask = np.zeros(shape, dtype=bool)
    mask[tuple(slice(1, s - 1) for s in shape)] = True
    return mask.ravel()


def solve_forward_array(problem: ForwardProblem, dt: float, steps: int):
    """Run ``steps`` implicit L1 steps; return ``(times, values)``.

    ``values[k]`` is the node array at ``t_k = k * dt`` for ``k = 0..steps``.

    Raises
    ------
    ConfigError
        If ``dt`` or ``steps`` is not positive.
    SolveFailure
        If a step's linear system is singular or produces non-finite values.
    """
    if not dt > 0 or steps < 1:
        raise ConfigError("dt and steps must be positive")
    alpha = problem.params.alpha
    shape = problem.node_shape
    sizes = list(shape)
    y = problem.nodes()
    size = math.prod(shape)
    interior = _interior_mask(shape)
    boundary = ~interior

    lap = sparse.csr_matrix((size, size))
    firsts = []
    for j, axis in enumerate(problem.space):
        second, first = _difference_matrices(axis)
        lap = lap + _kron_along(second, j, sizes)
        firsts.append(_kron_along(first, j, sizes))

    scale = dt ** (-alpha) / math.gamma(2.0 - alpha)
    weights = l1_weights(steps, alpha)
    times = dt * np.arange(steps + 1)
    values = np.zeros((steps + 1,) + shape)
    if problem.initial is not None:
        values[0] = np.broadcast_to(problem.initial, shape)
    diffs = np.zeros((steps, size))

    def as_nodes(fn, t):
        return np.broadcast_to(np.asarray(fn(t, *y), dtype=float), shape).ravel()

    cached_key, factor, coupling = None, None, None
    for k in range(1, steps + 1):
        t = times[k]
        op = lap
        key = []
        if problem.b is not None:
            comps = problem.b(t, *y)
            for j, comp in enumerate(comps):
                comp = np.broadcast_to(np.asarray(comp, dtype=float), shape).ravel()
                key.append(comp)
                op = op + sparse.diags(comp) @ firsts[j]
        if problem.c is not None:
            cvals = as_nodes(problem.c, t)
            key.append(cvals)
            op = op + sparse.diags(cvals)
        system = (scale * sparse.identity(size, format="csr") - op).tocsr()
        if cached_key is None or len(key) != len(cached_key) or any(
                not np.array_equal(a, b) for a, b in zip(key, cached_key)):
            a_ii = system[interior][:, interior].tocsc()
            coupling = system[interior][:, boundary]
            try:
                factor = splu(a_ii)
            except RuntimeError as exc:
                raise SolveFailure(f"singular system at step {k}: {exc}") from exc
            cached_key = key

        prev = values[k - 1].ravel()
        # history term of the L1 sum, j = 1..k-1
        history = weights[1:k][::-1] @ diffs[: k - 1] if k > 1 else 0.0
        rhs = scale * (prev - history)
        if problem.forcing is not None:
            rhs = rhs + as_nodes(problem.forcing, t)
        g = as_nodes(problem.boundary, t) if problem.boundary is not None else np.zeros(size)
        current = np.empty(size)
        current[boundary] = g[boundary]
        current[interior] = factor.solve(rhs[interior] - coupling @ g[boundary])
        if not np.all(np.isfinite(current)):
            raise SolveFailure(f"non-finite solution at step {k}")
        diffs[k - 1] = current - prev
        values[k] = current.reshape(shape)
    return times, values


def solve_forward(problem: ForwardProblem, dt: float) -> Field:
    """Solve on ``[0, T)`` and return a ``(t, y)`` field.

    The time axis holds ``T / dt`` samples starting at ``t = 0``; that count
    must be a power of two. The far boundary node of each space axis (the
    periodic image of the first) is dropped.

    Raises
    ------
    ConfigError
        If ``T / dt`` is not a power of two.
    SolveFailure
        As in :func:`solve_forward_array`.
    """
    steps = problem.params.T / dt
    count = int(round(steps))
    if abs(steps - count) > 1e-9 * max(1.0, steps):
        raise ConfigError(f"T / dt = {steps} is not an integer")
    t_axis = Axis("t", 0.0, problem.params.T, count)
    _, values = solve_forward_array(problem, dt, count - 1)
    values = values[(slice(None),) + tuple(slice(0, a.count) for a in problem.space)]
    grid = GridSpec((t_axis,) + tuple(problem.space))
    return Field(grid, values.astype(complex))


# ---------------------------------------------------------- continuation


@dataclass
class UcpReport:
    """Both sides of the weighted interior inequality along a ``beta`` sweep.

    ``weighted_interior[i] = beta^3 e^{9 beta X^2/16} int_{x_n <= X/4} |u|^2``
    and ``bound[i] = C(u) e^{beta X^2/4}``. ``interior_mass[i]`` is the bound
    on ``int_{x_n <= X/4} |u|^2`` that follows from the two; the fitted
    exponent is the least-squares slope of its logarithm against ``beta``.
    """

    params: ProblemParams
    beta: list
    weighted_interior: list
    bound: list
    interior_mass: list
    carleman_constant: list
    commutator_zone: list
    unweighted_interior: float
    c_u: float
    fitted_exponent: float | None
    commutator_leak: float
    extra: dict = field(default_factory=dict)

    @property
    def target_exponent(self) -> float:
        return 5.0 * self.params.X ** 2 / 16.0

    @property
    def ratio(self) -> list:
        return [a / b if b > 0 else (0.0 if a == 0 else math.inf)
                for a, b in zip(self.weighted_interior, self.bound)]

    @property
    def passed(self) -> bool:
        exponent_ok = (self.fitted_exponent is None
                       or self.fitted_exponent <= -0.8 * self.target_exponent)
        return exponent_ok and self.commutator_leak <= LOCALITY_TOL

    def to_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["beta", "interior_mass", "bound", "ratio"])
        for row in zip(self.beta, self.interior_mass, self.bound, self.ratio):
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "fitted_exponent": self.fitted_exponent,
            "target_exponent": self.target_exponent,
            "c_u": self.c_u,
            "unweighted_interior": self.unweighted_interior,
            "commutator_leak": self.commutator_leak,
            "pass": self.passed,
            **self.extra,
        }

    def to_json(self, **extra) -> str:
        return json.dumps({**self.summary(), **extra}, indent=2, sort_keys=True)


def _zone_integral(grid, weight, values, mask):
    return float(np.sum(np.where(mask, weight * np.abs(values) ** 2, 0.0)) * grid.cell_volume)


def ucp_experiment(params: ProblemParams, u: Field, beta_list, x_grid: GridSpec | None = None
                   ) -> UcpReport:
    """Localize ``u``, cut off with ``chi`` and assemble the interior bound.

    For each ``beta`` the Carleman constant ``K = lhs / rhs`` of ``chi u`` is
    measured with :func:`carleman_ratio`, and the commutator-zone integral
    ``Z = int_{X/2 < x_n <= X} e^{2 beta psi} |[P, chi] u|^2`` is formed with
    ``[P, chi] u = P(chi u) - chi P(u)``. ``C(u)`` is the largest
    ``K Z e^{-beta X^2/4}`` over the sweep.

    Raises
    ------
    SupportViolation
        Propagated from the localization step.
    OverflowGuard
        If a weight leaves the double range.
    """
    local = prepare_localized_field(params, u, x_grid)
    grid = local.grid
    xn = grid.coordinate(grid.space_names()[-1])
    chi = evaluate_cutoff(CutoffSpec.chi(params), xn)
    w = local * chi
    comm = apply_P(params, w).samples - chi * apply_P(params, local).samples
    zone = np.broadcast_to((xn > params.X / 2) & (xn <= params.X), grid.shape)
    inner = np.broadcast_to(xn <= params.X / 4, grid.shape)
    psi = 0.5 * (xn - params.X) ** 2

    total = float(np.sum(np.abs(comm) ** 2))
    leak = float(np.sum(np.abs(comm[~zone]) ** 2)) / total if total > 0 else 0.0
    mass = _zone_integral(grid, 1.0, local.samples, inner)

    betas = [float(b) for b in beta_list]
    x2 = params.X ** 2
    constants, zones = [], []
    trivial = w.norm() == 0
    for beta in betas:
        if trivial:
            constants.append(0.0)
            zones.append(0.0)
            continue
        constants.append(carleman_ratio(w, beta, params).ratio)
        zones.append(_zone_integral(grid, np.exp(2.0 * beta * psi), comm, zone))
    c_u = max((k * z * math.exp(-b * x2 / 4) for k, z, b in zip(constants, zones, betas)),
              default=0.0)
    left = [b ** 3 * math.exp(9 * b * x2 / 16) * mass for b in betas]
    bound = [c_u * math.exp(b * x2 / 4) for b in betas]
    implied = [c / (b ** 3 * math.exp(9 * b * x2 / 16)) for c, b in zip(bound, betas)]
    exponent = None
    if c_u > 0 and len(betas) > 1:
        exponent = float(np.polyfit(betas, np.log(implied), 1)[0])
    return UcpReport(params, betas, left, bound, implied, constants, zones, mass, c_u,
                     exponent, leak, {"carleman_slope": loglog_slope(betas, constants)
                                      if not trivial and len(betas) > 1 else None})
