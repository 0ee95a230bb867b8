"""Numerical checks of the subelliptic and Carleman estimates.

The estimates hold with unspecified constants, so every check measures a
ratio (left side over right side) and records it in a :class:`RatioSweep`;
boundedness is judged from how the ratio behaves along a sweep.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, OverflowGuard, ZeroDenominator
from .frac_ops import h_multiplier, lambda_alpha_multiplier
from .params import ProblemParams
from .spectral import (
    Field,
    GridSpec,
    apply_multiplier,
    apply_P,
    apply_P_psi,
    apply_shifted_P,
    apply_shifted_z_operator,
    smooth_step,
    spectral_derivative,
)

__all__ = [
    "RatioEntry",
    "RatioSweep",
    "ShiftedBoundReport",
    "SUBELLIPTIC_INDICES",
    "SHIFTED_PAIRS",
    "bump",
    "bump_field",
    "bump_family",
    "subelliptic_ratio",
    "conjugation_residual",
    "carleman_ratio",
    "carleman_ratio_conjugated",
    "shifted_bound_check",
    "chain_ratio",
    "loglog_slope",
]

# (k, s) with k + s < 2 over the nonnegative integers
SUBELLIPTIC_INDICES = ((0, 0), (1, 0), (0, 1))
SHIFTED_PAIRS = ((2, 0), (1, 0), (1, 1), (0, 1))
EXP_LIMIT = 700.0
ZERO_TOL = 1e-14


@dataclass(frozen=True)
class RatioEntry:
    param: object
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs


@dataclass
class RatioSweep:
    params: list = field(default_factory=list)
    lhs: list = field(default_factory=list)
    rhs: list = field(default_factory=list)

    @classmethod
    def from_entries(cls, entries) -> "RatioSweep":
        sweep = cls()
        for e in entries:
            sweep.append(e)
        return sweep

    def append(self, entry: RatioEntry):
        if not entry.rhs > 0:
            raise ZeroDenominator(f"nonpositive right-hand side at {entry.param!r}")
        self.params.append(entry.param)
        self.lhs.append(float(entry.lhs))
        self.rhs.append(float(entry.rhs))

    @property
    def ratio(self) -> list:
        return [a / b for a, b in zip(self.lhs, self.rhs)]

    @property
    def sup_ratio(self) -> float:
        return max(self.ratio)

    def slope(self) -> float:
        """Least-squares slope of ``log ratio`` against ``log param``."""
        return loglog_slope(self.params, self.ratio)

    def to_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["param", "lhs", "rhs", "ratio"])
        for p, a, b, r in zip(self.params, self.lhs, self.rhs, self.ratio):
            writer.writerow([p, repr(a), repr(b), repr(r)])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"count": len(self.params), "sup_ratio": self.sup_ratio}

    def to_json(self, **extra) -> str:
        return json.dumps({**self.summary(), **extra}, indent=2, sort_keys=True)


def loglog_slope(xs, ys) -> float:
    lx, ly = np.log(np.asarray(xs, dtype=float)), np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


# ------------------------------------------------------------- test fields


def bump(s):
    """Smooth bump on ``(-1, 1)`` built from the smooth step; equal to 1 at 0."""
    s = np.asarray(s, dtype=float)
    return smooth_step(1.5 * (1.0 + s)) * smooth_step(1.5 * (1.0 - s))


def bump_field(grid: GridSpec, centre, width, t_window=(0.0, 1.0), z_width=None) -> Field:
    """Tensor bump ``phi(t) prod_j bump((x_j - c_j) / w_j) [bump(z / z_width)]``.

    ``phi`` is a bump on ``t_window``, so the field is causal when the window
    starts at or after 0.
    """
    names = grid.space_names()
    centre = np.broadcast_to(np.asarray(centre, dtype=float), (len(names),))
    width = np.broadcast_to(np.asarray(width, dtype=float), (len(names),))
    a, b = t_window
    t = grid.coordinate("t")
    values = bump((2.0 * t - (a + b)) / (b - a))
    for nm, c, w in zip(names, centre, width):
        values = values * bump((grid.coordinate(nm) - c) / w)
    if grid.has("z"):
        zw = z_width if z_width is not None else 0.5 * grid.axis("z").length / 2
        values = values * bump(grid.coordinate("z") / zw)
    return Field(grid, np.broadcast_to(values, grid.shape).astype(complex))


def bump_family(grid: GridSpec, count: int, seed: int = 0, centre=0.0, centre_spread=0.05,
                widths=(0.15, 0.3), t_window=(0.0, 1.0), z_widths=None) -> list:
    """Reproducible family of bump fields.

    Centres are drawn uniformly within ``centre_spread`` of ``centre`` and
    widths uniformly from ``widths``, per space axis.
    """
    rng = np.random.default_rng(seed)
    n = len(grid.space_names())
    base = np.broadcast_to(np.asarray(centre, dtype=float), (n,))
    fields = []
    for _ in range(count):
        centre = base + rng.uniform(-centre_spread, centre_spread, n)
        width = rng.uniform(*widths, n)
        zw = rng.uniform(*z_widths) if z_widths is not None else None
        fields.append(bump_field(grid, centre, width, t_window, zw))
    return fields


# ------------------------------------------------------------- estimates


def _psi(params, grid):
    return 0.5 * (grid.coordinate(grid.space_names()[-1]) - params.X) ** 2


def _weight(params, grid, beta):
    psi = _psi(params, grid)
    if abs(beta) * float(np.max(psi)) > EXP_LIMIT:
        raise OverflowGuard(f"beta * max(psi) exceeds {EXP_LIMIT} at beta={beta}")
    return psi


def _support_weight(v, psi, beta):
    """``e^{2 beta (psi - m)}`` on the ``x_n``-support of ``v``, zero elsewhere.

    ``m`` is the largest ``psi`` on the support; the shift cancels in every
    ratio. Outside the support the exact integrands vanish, while their
    spectral approximations carry round-off that the weight would amplify.
    """
    grid = v.grid
    mag = np.abs(v.to_physical().samples)
    last = grid.index(grid.space_names()[-1])
    axes = tuple(i for i in range(grid.ndim) if i != last)
    support = np.max(mag, axis=axes, keepdims=True) > 0
    psi = np.broadcast_to(psi, support.shape)
    top = float(np.max(psi[support])) if np.any(support) else 0.0
    return np.where(support, np.exp(2.0 * beta * (np.minimum(psi, top) - top)), 0.0)


def _integral(grid, values):
    return float(np.sum(values) * grid.cell_volume)


def subelliptic_ratio(u: Field, params: ProblemParams) -> RatioEntry:
    """Subelliptic estimate ratio for a field on ``(t, x, z)``.

    ``lhs = sum_{(k,s)} ||h(D_z)^(2-k-s) Lambda_alpha^s D_z^k u||`` over
    :data:`SUBELLIPTIC_INDICES`; ``rhs = ||P_psi u||``.

    Raises
    ------
    ZeroDenominator
        If ``||P_psi u|| < 1e-14 ||u||``.
    """
    if not u.grid.has("z"):
        raise ConfigError("subelliptic_ratio needs a (t, x, z) field")
    rhs = apply_P_psi(params, u).norm()
    if rhs <= ZERO_TOL * u.norm() or rhs == 0:
        raise ZeroDenominator("||P_psi u|| is numerically zero")
    lhs = 0.0
    for k, s in SUBELLIPTIC_INDICES:
        def m(duals, k=k, s=s):
            lam = lambda_alpha_multiplier(params.alpha, s, duals.tau, list(duals.xi))
            return h_multiplier(duals.sigma) ** (2 - k - s) * lam * duals.sigma ** k
        lhs += apply_multiplier(u, m).norm()
    return RatioEntry(None, lhs, rhs)


def conjugation_residual(params: ProblemParams, w: Field, beta: float,
                         ordering: str = "composed") -> float:
    """Relative gap between the shifted operator and the conjugated one.

    Returns ``||A w - e^{|beta| psi} P(e^{-|beta| psi} w)|| / ||A w||`` with
    ``A = p(x, D_t, D_x + i|beta| grad psi)`` (see :func:`apply_shifted_P` for
    ``ordering``).

    Raises
    ------
    OverflowGuard
        If ``|beta| * max(psi)`` on the grid exceeds 700.
    """
    psi = _weight(params, w.grid, beta)
    b = abs(beta)
    shifted = apply_shifted_P(params, w, b, ordering)
    conj = np.exp(b * psi) * apply_P(params, w * np.exp(-b * psi)).samples
    denom = shifted.norm()
    if denom == 0:
        raise ZeroDenominator("shifted operator annihilates w")
    return Field(w.grid, shifted.samples - conj).norm() / denom


def carleman_ratio(v: Field, beta: float, params: ProblemParams) -> RatioEntry:
    """Weighted Carleman ratio for ``v`` on ``(t, x)``.

    ``lhs = beta^3 int e^{2 beta psi}|v|^2 + beta sum_j int e^{2 beta psi}|D_j v|^2``,
    ``rhs = int e^{2 beta psi} |P v|^2``, trapezoid sums on the periodic grid.
    """
    grid = v.grid
    psi = _weight(params, grid, beta)
    weight = _support_weight(v, psi, beta)
    mass = _integral(grid, weight * np.abs(v.samples) ** 2)
    grad = sum(_integral(grid, weight * np.abs(spectral_derivative(v, nm).samples) ** 2)
               for nm in grid.space_names())
    rhs = _integral(grid, weight * np.abs(apply_P(params, v).samples) ** 2)
    if mass == 0 or math.sqrt(rhs) <= ZERO_TOL * math.sqrt(mass):
        raise ZeroDenominator("weighted ||P v|| is numerically zero")
    return RatioEntry(beta, beta ** 3 * mass + beta * grad, rhs)


def carleman_ratio_conjugated(v: Field, beta: float, params: ProblemParams) -> RatioEntry:
    """The same ratio computed on ``f = e^{beta psi} v`` with conjugated operators.

    ``lhs = beta^3 ||f||^2 + beta sum_j ||(D_j + i beta d_j psi) f||^2`` and
    ``rhs = ||p(x, D + i beta grad psi) f||^2``; no weights appear in the
    integrals.
    """
    grid = v.grid
    psi = _weight(params, grid, beta)
    f = v * np.exp(beta * psi)
    names = grid.space_names()
    grad = 0.0
    for nm in names:
        df = -1j * spectral_derivative(f, nm).samples
        if nm == names[-1]:
            df = df + 1j * beta * (grid.coordinate(nm) - params.X) * f.samples
        grad += _integral(grid, np.abs(df) ** 2)
    rhs = apply_shifted_P(params, f, beta, "composed").l2_mass()
    mass = f.l2_mass()
    if mass == 0 or math.sqrt(rhs) <= ZERO_TOL * math.sqrt(mass):
        raise ZeroDenominator("||p(x, D + i beta grad psi) f|| is numerically zero")
    return RatioEntry(beta, beta ** 3 * mass + beta * grad, rhs)


def chain_ratio(f: Field, g: Field, beta: float, params: ProblemParams) -> RatioEntry:
    """End-to-end ratio for ``u = e^{i beta z} f(t, x) g(z)``.

    ``lhs = sum_{|gamma| <= 1} beta^(3 - 2|gamma|) ||D^gamma f||^2``,
    ``rhs = ||P_psi u||^2``; the modulation is handled through the envelope.
    """
    tx = f.grid
    grid = GridSpec(tx.axes + g.grid.axes)
    u = Field(grid, f.samples[..., None] * g.samples.reshape((1,) * tx.ndim + (-1,)))
    rhs = apply_P_psi(params, u, sigma_shift=beta).l2_mass()
    grad = sum(spectral_derivative(f, nm).l2_mass() for nm in tx.space_names())
    return RatioEntry(beta, beta ** 3 * f.l2_mass() + beta * grad, rhs)


@dataclass
class ShiftedBoundReport:
    """Error ratios (upper line) and norm ratios (lower line) per ``(j, k)``."""

    upper: dict
    lower: dict

    def upper_slopes(self) -> dict:
        return {key: sweep.slope() for key, sweep in self.upper.items()}

    def worst_upper_slope(self) -> float:
        return max(self.upper_slopes().values())

    def min_lower(self) -> float:
        return min(min(s.ratio) for s in self.lower.values())


def shifted_bound_check(g: Field, beta_list, pairs=SHIFTED_PAIRS) -> ShiftedBoundReport:
    """Measure both lines of the shifted-multiplier bounds for each ``beta``.

    For ``(j, k)`` the scale is ``c = h(beta)^j beta^k ||g||``; the upper line
    records ``||e^{-i beta z} h(D)^j D^k (e^{i beta z} g) - h(beta)^j beta^k g|| / c``
    and the lower line ``||h(D)^j D^k (e^{i beta z} g)|| / c``.
    """
    gnorm = g.norm()
    upper, lower = {}, {}
    for j, k in pairs:
        up, low = RatioSweep(), RatioSweep()
        for beta in beta_list:
            scale = h_multiplier(beta) ** j * beta ** k
            out = apply_shifted_z_operator(g, beta, j, k, "raw")
            err = (out - g * scale).norm()
            up.append(RatioEntry(beta, err, scale * gnorm))
            low.append(RatioEntry(beta, out.norm(), scale * gnorm))
        upper[(j, k)] = up
        lower[(j, k)] = low
    return ShiftedBoundReport(upper, lower)
