"""Fractional-calculus primitives.

Principal-branch complex powers, the L1 discretization of the Caputo
derivative, and the Fourier multipliers ``Lambda_alpha^m`` and ``h``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import toeplitz

from .errors import DomainError

__all__ = [
    "TimeSeries",
    "complex_power",
    "caputo_l1",
    "caputo_l1_array",
    "fractional_integral",
    "l1_weights",
    "lambda_alpha_multiplier",
    "h_multiplier",
    "frac_symbol",
    "drift_symbol",
]


@dataclass(frozen=True)
class TimeSeries:
    """Samples ``u(t_k)``, ``t_k = k * dt``, ``k = 0..N``.

    Sample 0 sits at the lower limit of the Caputo integral.
    """

    values: np.ndarray
    dt: float

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 1 or values.size < 2:
            raise DomainError("a time series needs at least two samples")
        if not self.dt > 0:
            raise DomainError(f"dt={self.dt!r} must be positive")
        object.__setattr__(self, "values", values)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.values.size)


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha={alpha!r} must lie in (0, 1)")


def complex_power(z, a):
    """Principal branch ``exp(a * (log|z| + i arg z))`` with ``arg`` in ``(-pi, pi]``.

    Works elementwise on arrays. Positive real inputs give the real power
    function exactly.
    """
    z = np.asarray(z, dtype=complex)
    if np.any(z == 0):
        raise DomainError("complex_power is undefined at z = 0")
    if z.ndim == 0:
        if z.imag == 0 and z.real > 0:
            return complex(float(z.real) ** a)
        return complex(np.exp(a * (np.log(abs(z)) + 1j * np.angle(z))))
    out = np.exp(a * (np.log(np.abs(z)) + 1j * np.angle(z)))
    positive = (z.imag == 0) & (z.real > 0)
    if np.any(positive):
        out[positive] = z.real[positive] ** a
    return out


def l1_weights(count: int, alpha: float) -> np.ndarray:
    """``b_j = (j+1)^(1-alpha) - j^(1-alpha)`` for ``j = 0..count-1``."""
    j = np.arange(count, dtype=float)
    return (j + 1.0) ** (1.0 - alpha) - j ** (1.0 - alpha)


def caputo_l1_array(values, dt: float, alpha: float, axis: int = 0) -> np.ndarray:
    """L1 Caputo derivative of samples along ``axis``; sample 0 is the lower limit."""
    _check_alpha(alpha)
    values = np.asarray(values)
    u = np.moveaxis(values, axis, 0)
    count = u.shape[0]
    if count < 2:
        raise DomainError("need at least two samples")
    diffs = u[1:] - u[:-1]
    b = l1_weights(count - 1, alpha)
    # out_k = c * sum_{j<k} b_j * d_{k-j}, a causal Toeplitz product
    weights = np.tril(toeplitz(b))
    flat = diffs.reshape(count - 1, -1)
    conv = weights @ flat
    scale = dt ** (-alpha) / math.gamma(2.0 - alpha)
    out = np.zeros_like(u, dtype=np.result_type(u.dtype, float))
    out[1:] = scale * conv.reshape(diffs.shape)
    return np.moveaxis(out, 0, axis)


def caputo_l1(u: TimeSeries, alpha: float) -> TimeSeries:
    """L1 scheme for the Caputo derivative of order ``alpha``.

    Exact on piecewise-linear inputs; order ``2 - alpha`` on smooth ones.

    Raises
    ------
    DomainError
        If ``alpha`` is not in ``(0, 1)``.
    """
    return TimeSeries(caputo_l1_array(u.values, u.dt, alpha), u.dt)


def fractional_integral(values, dt: float, order: float, axis: int = 0) -> np.ndarray:
    """Riemann-Liouville integral of ``order`` in ``(0, 1)`` from ``t_0``.

    Uses ``I^order v = d^(1-order) (I^1 v)`` (Caputo), valid because the
    running integral vanishes at the lower limit.
    """
    running = cumulative_trapezoid(np.asarray(values), dx=dt, axis=axis, initial=0)
    return caputo_l1_array(running, dt, 1.0 - order, axis=axis)


def frac_symbol(alpha: float, tau0: float, tau):
    """``(i (tau + i tau0))^alpha``, the symbol of the conjugated Caputo derivative."""
    return complex_power(1j * (np.asarray(tau) + 1j * tau0), alpha)


def drift_symbol(alpha: float, tau0: float, tau):
    """``i^alpha (tau + i tau0)^(alpha - 1)``.

    Realizes ``D_t^(alpha-1)`` times ``i`` as a Fourier multiplier; the product
    of the two principal powers equals ``(i(tau + i tau0))^(alpha-1) * i``.
    """
    return complex_power(1j, alpha) * complex_power(np.asarray(tau) + 1j * tau0, alpha - 1.0)


def lambda_alpha_multiplier(alpha: float, m: float, tau, xi):
    """``((1 + |xi|^2)^(1/alpha) + i tau)^(m alpha / 2)``.

    ``xi`` is a vector (last axis) or a sequence of broadcastable component
    arrays; the base has real part at least one.
    """
    if isinstance(xi, (list, tuple)):
        xi_sq = sum(np.asarray(c, dtype=float) ** 2 for c in xi)
    else:
        xi = np.asarray(xi, dtype=float)
        xi_sq = np.sum(xi ** 2, axis=-1) if xi.ndim else xi ** 2
    base = (1.0 + xi_sq) ** (1.0 / alpha) + 1j * np.asarray(tau)
    return complex_power(base, m * alpha / 2.0)


def h_multiplier(sigma):
    """``(1 + sigma^2)^(1/4)``."""
    sigma = np.asarray(sigma, dtype=float)
    out = (1.0 + sigma ** 2) ** 0.25
    return float(out) if out.ndim == 0 else out
