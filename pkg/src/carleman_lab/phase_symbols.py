"""Closed-form symbols of the transformed operator and scans of their bounds.

Every evaluator has an array twin (``*_arrays``) that works on stacks of
phase points: ``x`` and ``xi`` of shape ``(N, n)``, ``tau`` and ``sigma`` of
shape ``(N,)``. The scans in :func:`verify_symbol_bounds` use those.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySampleSet, RootFindFailure
from .frac_ops import complex_power, drift_symbol, frac_symbol
from .params import PhasePoint, ProblemParams

__all__ = [
    "SymbolValue",
    "BoundKind",
    "BoundReport",
    "SamplingSpec",
    "total_symbol",
    "conjugated_principal_symbol",
    "principal_homogeneous_part",
    "symbol_gradients",
    "poisson_bracket",
    "bracket_from_gradients",
    "verify_symbol_bounds",
    "solve_characteristic_sigma2",
    "characteristic_sigma2",
    "hypoelliptic_ratio",
]

DEFAULT_THRESHOLD = 1e-3


@dataclass(frozen=True)
class SymbolValue:
    value: complex

    @property
    def re(self) -> float:
        return self.value.real

    @property
    def im(self) -> float:
        return self.value.imag


def _split(x):
    """Return ``(x', x_n)`` along the last axis."""
    return x[..., :-1], x[..., -1]


def _g_f(x, xi):
    xp, _ = _split(x)
    xip, _ = _split(xi)
    g = np.sum(xp * xip, axis=-1)
    f = 1.0 + 4.0 * np.sum(xp * xp, axis=-1)
    return g, f


def _spatial_part(x, xi):
    """``|xi'|^2 + 4 g xi_n + f xi_n^2``, nonnegative."""
    _, xin = _split(xi)
    xip, _ = _split(xi)
    g, f = _g_f(x, xi)
    return np.sum(xip * xip, axis=-1) + 4.0 * g * xin + f * xin ** 2


def total_symbol_arrays(params: ProblemParams, x, tau, xi):
    x, xi = np.asarray(x, float), np.asarray(xi, float)
    _, xin = _split(xi)
    return (frac_symbol(params.alpha, params.tau0, tau) + _spatial_part(x, xi)
            + params.X / params.T * drift_symbol(params.alpha, params.tau0, tau) * xin)


def total_symbol(params: ProblemParams, pt: PhasePoint) -> SymbolValue:
    """Total symbol ``p(x; tau, xi)`` of the conjugated, transformed operator.

    ``pt.sigma`` is ignored.
    """
    return SymbolValue(complex(total_symbol_arrays(params, pt.x, pt.tau, pt.xi)))


def conjugated_arrays(params: ProblemParams, x, tau, xi, sigma, frac=None):
    x, xi = np.asarray(x, float), np.asarray(xi, float)
    s = np.abs(np.asarray(sigma, float))
    _, xn = _split(x)
    _, xin = _split(xi)
    g, f = _g_f(x, xi)
    d = xn - params.X
    if frac is None:
        frac = frac_symbol(params.alpha, params.tau0, tau)
    re = _spatial_part(x, xi) - f * s ** 2 * d ** 2
    im = 4.0 * g * d * s + 2.0 * f * xin * d * s
    return frac + re + 1j * im


def conjugated_principal_symbol(params: ProblemParams, pt: PhasePoint) -> SymbolValue:
    """Principal symbol of the operator conjugated by ``exp(|sigma| psi)``.

    The weight is ``psi = (x_n - X)^2 / 2``. The result depends on neither
    ``t`` nor ``z``, which is why the signature takes no such argument.
    """
    return SymbolValue(complex(conjugated_arrays(params, pt.x, pt.tau, pt.xi, pt.sigma)))


def principal_homogeneous_part(params: ProblemParams, pt: PhasePoint) -> SymbolValue:
    """Conjugated principal symbol with ``tau0 = 0``.

    This part is quasi-homogeneous of degree 2 under
    ``(xi, tau, sigma) -> (eta xi, eta^(2/alpha) tau, eta sigma)``.
    """
    frac = 0.0 if pt.tau == 0 else complex_power(1j * pt.tau, params.alpha)
    return SymbolValue(complex(conjugated_arrays(params, pt.x, pt.tau, pt.xi, pt.sigma,
                                                 frac=frac)))


def gradients_arrays(params: ProblemParams, x, xi, sigma):
    x, xi = np.asarray(x, float), np.asarray(xi, float)
    s = np.abs(np.asarray(sigma, float))[..., None]
    xp, xn = _split(x)
    xip, xin = _split(xi)
    g, f = _g_f(x, xi)
    d = (xn - params.X)[..., None]
    xin_, g_, f_ = xin[..., None], g[..., None], f[..., None]

    def pad(prime, last):
        return np.concatenate([prime, last], axis=-1)

    zeros = np.zeros_like(xp)
    grad_xi_re = pad(2.0 * xip + 4.0 * xin_ * xp, 4.0 * g_ + 2.0 * f_ * xin_)
    grad_x_im = pad(4.0 * d * s * xip + 16.0 * xin_ * d * s * xp,
                    4.0 * g_ * s + 2.0 * f_ * xin_ * s)
    grad_x_re = pad(4.0 * xin_ * xip + 8.0 * xin_ ** 2 * xp - 8.0 * d ** 2 * s ** 2 * xp,
                    -2.0 * f_ * d * s ** 2)
    grad_xi_im = pad(4.0 * d * s * xp + zeros, 2.0 * f_ * d * s)
    return grad_xi_re, grad_x_im, grad_x_re, grad_xi_im


def symbol_gradients(params: ProblemParams, pt: PhasePoint):
    """Return ``(grad_xi Re, grad_x Im, grad_x Re, grad_xi Im)`` of the conjugated symbol.

    Each entry is a length-``n`` vector. ``t`` and ``tau`` derivatives are not
    needed by the bracket and are not returned.
    """
    return gradients_arrays(params, pt.x, pt.xi, pt.sigma)


def bracket_from_gradients(grad_xi_re, grad_x_im, grad_x_re, grad_xi_im):
    """Contract the four gradients into ``{Re, Im}``."""
    return (np.sum(grad_xi_re * grad_x_im, axis=-1)
            - np.sum(grad_x_re * grad_xi_im, axis=-1))


def bracket_arrays(params: ProblemParams, x, xi, sigma):
    """Poisson bracket from the two expanded sums."""
    x, xi = np.asarray(x, float), np.asarray(xi, float)
    s = np.abs(np.asarray(sigma, float))
    xp, xn = _split(x)
    xip, xin = _split(xi)
    g, f = _g_f(x, xi)
    d = xn - params.X
    xp2 = np.sum(xp * xp, axis=-1)
    xip2 = np.sum(xip * xip, axis=-1)
    first = (8 * d * s * xip2 + 48 * g * xin * d * s + 64 * xp2 * xin ** 2 * d * s
             + 16 * g ** 2 * s + 16 * f * g * xin * s + 4 * f ** 2 * xin ** 2 * s)
    second = (16 * g * xin * d * s + 32 * xp2 * xin ** 2 * d * s
              - 32 * xp2 * d ** 3 * s ** 3 - 4 * f ** 2 * d ** 2 * s ** 3)
    return first - second


def poisson_bracket(params: ProblemParams, pt: PhasePoint) -> float:
    """``{Re p, Im p} = sum_j (d_xi_j Re d_x_j Im - d_x_j Re d_xi_j Im)``."""
    return float(bracket_arrays(params, pt.x, pt.xi, pt.sigma))


# ----------------------------------------------------------------- bound scans


class BoundKind(str, enum.Enum):
    FRAC_REAL = "FracReal"
    CHARACTERISTIC = "Characteristic"
    BRACKET = "Bracket"
    ELLIPTIC = "Elliptic"
    HYPOELLIPTIC = "Hypoelliptic"


@dataclass(frozen=True)
class SamplingSpec:
    """Sample-set descriptor for :func:`verify_symbol_bounds`.

    Spatial samples have ``|x'|^2 <= xprime_sq_frac * X`` and
    ``x_n`` in ``[xn_lo * X, xn_hi * X]``. Frequency samples lie on the
    anisotropic unit sphere ``|xi|^2 + sigma^2 + |tau|^alpha = 1``.
    """

    count: int = 10_000
    seed: int = 0
    threshold: float = DEFAULT_THRESHOLD
    eta: float = 50.0
    delta1: float = 1.0
    elliptic_cap: float | None = None
    tau_log_range: tuple[float, float] = (-2.0, 4.0)
    xprime_sq_frac: float = 0.25
    xn_lo: float = -1.0
    xn_hi: float = 0.5


@dataclass
class BoundReport:
    kind: str
    worst_ratio: float
    argmin: PhasePoint
    samples: int
    threshold: float
    skipped: int = 0
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = bool(self.threshold > 0 and self.worst_ratio >= self.threshold)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "worst_ratio": self.worst_ratio,
            "argmin": self.argmin.to_dict(),
            "samples": self.samples,
            "threshold": self.threshold,
            "skipped": self.skipped,
            "pass": self.passed,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _sample_space(params, spec, rng, count):
    n = params.n
    X = params.X
    xp = np.zeros((count, n - 1))
    if n > 1:
        direction = rng.standard_normal((count, n - 1))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radius = math.sqrt(spec.xprime_sq_frac * X) * rng.random(count) ** (1.0 / (n - 1))
        xp = direction * radius[:, None]
    xn = X * rng.uniform(spec.xn_lo, spec.xn_hi, count)
    return np.concatenate([xp, xn[:, None]], axis=1)


def _sphere_directions(rng, count, n):
    """Unit vectors on ``S^n`` packed as ``(xi, tau_hat)``."""
    w = rng.standard_normal((count, n + 1))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    return w[:, :n], w[:, n]


def _tau_from_hat(tau_hat, alpha):
    """``tau`` with ``|tau|^alpha = tau_hat^2``."""
    return np.sign(tau_hat) * np.abs(tau_hat) ** (2.0 / alpha)


def _sample_region(params, spec, rng, count, sigma_ratio_range):
    """Points on the unit sphere with ``sigma^2 / (|xi|^2 + |tau|^alpha)`` in range."""
    xi, tau_hat = _sphere_directions(rng, count, params.n)
    lo, hi = sigma_ratio_range
    phi_lo = math.atan(math.sqrt(lo))
    phi_hi = math.atan(math.sqrt(hi)) if math.isfinite(hi) else math.pi / 2
    phi = rng.uniform(phi_lo, phi_hi, count)
    rest = np.cos(phi)
    sigma = np.sin(phi) * np.where(rng.random(count) < 0.5, -1.0, 1.0)
    return xi * rest[:, None], _tau_from_hat(tau_hat * rest, params.alpha), sigma


def solve_characteristic_sigma2(params: ProblemParams, x, tau, xi, iters: int = 200):
    """Solve ``Re p(sigma^2) = 0`` for ``sigma^2 >= 0`` by bisection.

    Returns ``(sigma2, ok)``; ``ok`` is False where no root exists, i.e. where
    ``Re p`` does not change sign on ``[0, inf)``.
    """
    x, xi = np.atleast_2d(x), np.atleast_2d(xi)
    tau = np.atleast_1d(np.asarray(tau, float))

    def re_p(s2):
        return conjugated_arrays(params, x, tau, xi, np.sqrt(s2)).real

    lo = np.zeros(tau.shape)
    hi = np.ones(tau.shape)
    ok = re_p(lo) >= 0
    while True:
        grow = ok & (re_p(hi) > 0) & (hi < 1e300)
        if not grow.any():
            break
        hi = np.where(grow, 2.0 * hi, hi)
    ok &= re_p(hi) <= 0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        positive = re_p(mid) > 0
        lo = np.where(positive, mid, lo)
        hi = np.where(positive, hi, mid)
        if np.all(hi - lo <= 1e-15 * np.maximum(hi, 1e-300)):
            break
    return 0.5 * (lo + hi), ok


def verify_symbol_bounds(kind, params: ProblemParams, sampling: SamplingSpec | None = None
                         ) -> BoundReport:
    """Scan one pointwise symbol inequality and report the worst ratio.

    ``kind`` is a :class:`BoundKind` or its string value. Every ratio is
    (left side) / (right side) of the inequality, evaluated where the
    inequality is claimed. Quasi-homogeneity makes a scan over the
    anisotropic unit sphere representative.

    Raises
    ------
    EmptySampleSet
        If no sample survives the region constraint.
    """
    kind = BoundKind(kind)
    spec = sampling or SamplingSpec()
    rng = np.random.default_rng(spec.seed)
    alpha = params.alpha
    count = spec.count
    skipped = 0

    if kind is BoundKind.FRAC_REAL:
        mags = np.logspace(*spec.tau_log_range, count // 2 + count % 2)
        tau = np.concatenate([mags, -mags[: count // 2]])
        ratio = frac_symbol(alpha, params.tau0, tau).real / np.abs(tau) ** alpha
        x = np.zeros((tau.size, params.n))
        xi = np.zeros((tau.size, params.n))
        sigma = np.zeros(tau.size)
    else:
        x = _sample_space(params, spec, rng, count)
        if kind in (BoundKind.CHARACTERISTIC, BoundKind.BRACKET):
            xi, tau_hat = _sphere_directions(rng, count, params.n)
            tau = _tau_from_hat(tau_hat, alpha)
            sigma2, ok = solve_characteristic_sigma2(params, x, tau, xi)
            skipped = int(np.count_nonzero(~ok))
            sigma = np.sqrt(sigma2)
            base = np.sum(xi ** 2, axis=1) + np.abs(tau) ** alpha
            if kind is BoundKind.BRACKET:
                ok &= sigma2 >= spec.delta1 * base
            x, xi, tau, sigma = x[ok], xi[ok], tau[ok], sigma[ok]
        elif kind is BoundKind.ELLIPTIC:
            cap = spec.elliptic_cap if spec.elliptic_cap is not None else 2.0 * spec.delta1
            xi, tau, sigma = _sample_region(params, spec, rng, count, (0.0, cap))
        else:
            xi, tau, sigma = _sample_region(params, spec, rng, count, (spec.delta1, math.inf))
        if tau.size == 0:
            raise EmptySampleSet(f"{kind.value}: region rejected every sample")
        size = np.sum(xi ** 2, axis=1) + sigma ** 2 + np.abs(tau) ** alpha
        d = x[:, -1] - params.X
        if kind is BoundKind.CHARACTERISTIC:
            ratio = d ** 2 * sigma ** 2 / size
        elif kind is BoundKind.BRACKET:
            ratio = bracket_arrays(params, x, xi, sigma) / size ** 1.5
        elif kind is BoundKind.ELLIPTIC:
            ratio = np.abs(conjugated_arrays(params, x, tau, xi, sigma).real) / size
        else:
            p = conjugated_arrays(params, x, tau, xi, sigma)
            left = spec.eta * size ** -0.5 * np.abs(p) ** 2 + 2.0 * bracket_arrays(
                params, x, xi, sigma)
            ratio = left / size ** 1.5

    if ratio.size == 0:
        raise EmptySampleSet(f"{kind.value}: no samples")
    k = int(np.argmin(ratio))
    argmin = PhasePoint(x[k], float(tau[k]), xi[k], float(sigma[k]))
    return BoundReport(kind.value, float(ratio[k]), argmin, int(ratio.size), spec.threshold,
                       skipped=skipped)


def hypoelliptic_ratio(params: ProblemParams, pt: PhasePoint, eta: float) -> float:
    """Left over right side of the hypoelliptic positivity bound at one point."""
    size = float(np.sum(pt.xi ** 2) + pt.sigma ** 2 + abs(pt.tau) ** params.alpha)
    p = conjugated_principal_symbol(params, pt).value
    return (eta * size ** -0.5 * abs(p) ** 2 + 2.0 * poisson_bracket(params, pt)) / size ** 1.5


def characteristic_sigma2(params: ProblemParams, pt: PhasePoint) -> float:
    """Characteristic ``sigma^2`` at a single point, raising when no root exists."""
    sigma2, ok = solve_characteristic_sigma2(params, pt.x, pt.tau, pt.xi)
    if not ok[0]:
        raise RootFindFailure("Re p does not vanish for any sigma at this point")
    return float(sigma2[0])
