"""Problem scalars and phase-space points."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

X_MAX = 0.25


@dataclass(frozen=True)
class ProblemParams:
    """Scalars of the transformed anomalous diffusion problem.

    Parameters
    ----------
    alpha : float
        Order of the Caputo derivative, in ``(0, 1)``.
    tau0 : float
        Exponential time conjugation rate, strictly negative.
    X : float
        Holmgren shift, ``0 < X <= 0.25``.
    T : float
        Time horizon.
    n : int
        Space dimension.
    l : float
        Half-width of the box on which the solution vanishes.
    eps : float
        Margin of the time cutoff, ``0 < eps < T``.
    """

    alpha: float = 0.5
    tau0: float = -1.0
    X: float = 0.1
    T: float = 1.0
    n: int = 2
    l: float = 1.0
    eps: float = 0.1

    def __post_init__(self):
        checks = [
            ("alpha", 0.0 < self.alpha < 1.0, "must lie in (0, 1)"),
            ("tau0", self.tau0 < 0.0, "must be negative"),
            ("X", 0.0 < self.X <= X_MAX, f"must lie in (0, {X_MAX}]"),
            ("T", self.T > 0.0, "must be positive"),
            ("n", int(self.n) == self.n and self.n >= 1, "must be an integer >= 1"),
            ("l", self.l > 0.0, "must be positive"),
            ("eps", 0.0 < self.eps < self.T, "must lie in (0, T)"),
        ]
        for name, ok, msg in checks:
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and ok):
                raise DomainError(f"{name}={value!r} {msg}")
        object.__setattr__(self, "n", int(self.n))

    def replace(self, **changes) -> "ProblemParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class PhasePoint:
    """A point ``(x; tau, xi, sigma)`` of extended phase space."""

    x: np.ndarray
    tau: float
    xi: np.ndarray
    sigma: float = 0.0

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        if x.shape != xi.shape or x.ndim != 1:
            raise DomainError("x and xi must be vectors of equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xi))
                and math.isfinite(self.tau) and math.isfinite(self.sigma)):
            raise DomainError("phase point entries must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def n(self) -> int:
        return self.x.size

    def to_dict(self) -> dict:
        return {"x": self.x.tolist(), "tau": self.tau, "xi": self.xi.tolist(),
                "sigma": self.sigma}
