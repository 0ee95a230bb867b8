"""Cutoffs, the Holmgren change of variables and the localization pipeline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import ConfigError, SupportViolation
from .params import ProblemParams
from .spectral import Field, GridSpec, smooth_step

__all__ = [
    "CutoffSpec",
    "evaluate_cutoff",
    "holmgren_map",
    "prepare_localized_field",
    "SUPPORT_TOL",
]

SUPPORT_TOL = 1e-12


@dataclass(frozen=True)
class CutoffSpec:
    """Smooth cutoff equal to ``left`` below ``lo`` and ``1 - left`` above ``hi``.

    Use the constructors :meth:`theta`, :meth:`kappa` and :meth:`chi` for the
    three cutoffs of the model.
    """

    kind: str
    lo: float
    hi: float
    left: float

    def __post_init__(self):
        if self.kind not in ("theta", "kappa", "chi"):
            raise ConfigError(f"unknown cutoff kind {self.kind!r}")
        if not self.lo < self.hi:
            raise ConfigError("cutoff transition needs lo < hi")
        if self.left not in (0.0, 1.0):
            raise ConfigError("left plateau value must be 0 or 1")

    @classmethod
    def theta(cls, params: ProblemParams) -> "CutoffSpec":
        """1 for ``t <= T - eps``, 0 for ``t >= T - eps/2``."""
        return cls("theta", params.T - params.eps, params.T - params.eps / 2, 1.0)

    @classmethod
    def kappa(cls, params: ProblemParams) -> "CutoffSpec":
        """0 for ``y_n <= -2l/3``, 1 for ``y_n >= -l/3``."""
        return cls("kappa", -2.0 * params.l / 3.0, -params.l / 3.0, 0.0)

    @classmethod
    def chi(cls, params: ProblemParams) -> "CutoffSpec":
        """1 for ``x_n <= X/2``, 0 for ``x_n >= X``."""
        return cls("chi", params.X / 2.0, params.X, 1.0)


def evaluate_cutoff(spec: CutoffSpec, coordinate):
    """Evaluate a cutoff; scalars in, float out, arrays in, arrays out."""
    s = (np.asarray(coordinate, dtype=float) - spec.lo) / (spec.hi - spec.lo)
    rise = smooth_step(s)
    value = 1.0 - rise if spec.left == 1.0 else rise
    return float(value) if value.ndim == 0 else value


def holmgren_map(params: ProblemParams, y_prime, y_n, t, direction: str = "forward",
                 y_hat=None):
    """Holmgren change of variables and its inverse.

    Forward: ``x' = y' - y_hat'``, ``x_n = y_n + |y' - y_hat'|^2 + (X/T)(t - T)``.
    Inverse: ``y' = x' + y_hat'``, ``y_n = x_n - |x'|^2 - (X/T)(t - T)``.
    Array arguments broadcast; ``y_prime`` carries its ``n - 1`` components in
    the last axis (or a list of broadcastable arrays). ``y_hat`` defaults to 0.
    """
    if isinstance(y_prime, (list, tuple)):
        comps = [np.asarray(c, dtype=float) for c in y_prime]
    else:
        arr = np.asarray(y_prime, dtype=float)
        comps = [arr[..., j] for j in range(arr.shape[-1])] if arr.ndim else []
    hat = [0.0] * len(comps) if y_hat is None else list(np.atleast_1d(y_hat))
    shift = params.X / params.T * (np.asarray(t, dtype=float) - params.T)
    if direction == "forward":
        out = [c - h for c, h in zip(comps, hat)]
        radius = sum(c ** 2 for c in out) if out else 0.0
        last = np.asarray(y_n, dtype=float) + radius + shift
    elif direction == "inverse":
        radius = sum(c ** 2 for c in comps) if comps else 0.0
        out = [c + h for c, h in zip(comps, hat)]
        last = np.asarray(y_n, dtype=float) - radius - shift
    else:
        raise ConfigError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    if isinstance(y_prime, (list, tuple)):
        return out, last, t
    prime = np.stack(out, axis=-1) if out else np.zeros(np.shape(last) + (0,))
    return prime, last, t


def _check_supports(params, u: Field):
    grid = u.grid
    samples = u.to_physical().samples
    scale = np.max(np.abs(samples)) if samples.size else 0.0
    if scale == 0:
        return
    t = grid.coordinate("t")
    yn = grid.coordinate(grid.space_names()[-1])
    forbidden = (t <= 0) | (t >= params.T) | (yn <= 0)
    bad = np.abs(samples) * np.broadcast_to(forbidden, samples.shape)
    if np.max(bad) > SUPPORT_TOL * scale:
        raise SupportViolation("input is nonzero where t <= 0, t >= T or y_n <= 0")


def prepare_localized_field(params: ProblemParams, u: Field, x_grid: GridSpec | None = None
                            ) -> Field:
    """Cut off, push forward to Holmgren coordinates, conjugate by ``e^{tau0 t}``.

    ``u`` lives on a ``(t, y_1..y_n)`` grid. The result lives on ``x_grid``
    (default: the same axes renamed ``x``). Resampling uses cubic tensor
    splines; points mapped to ``y_n <= 0`` or ``t <= 0``, or into cells where
    the cut-off input vanishes, are set to zero exactly.

    Raises
    ------
    SupportViolation
        If ``u`` is nonzero (relative to its maximum) where it must vanish.
    """
    grid = u.grid
    names = grid.space_names()
    if len(names) != params.n or not grid.has("t"):
        raise ConfigError("input must live on a (t, y_1..y_n) grid with n = params.n")
    _check_supports(params, u)
    if x_grid is None:
        x_grid = GridSpec(tuple(
            type(a)(a.name.replace("y", "x"), a.start, a.length, a.count) for a in grid.axes))
    if x_grid.space_names() and len(x_grid.space_names()) != params.n:
        raise ConfigError("x_grid has the wrong number of space axes")

    theta = evaluate_cutoff(CutoffSpec.theta(params), grid.coordinate("t"))
    kappa = evaluate_cutoff(CutoffSpec.kappa(params), grid.coordinate(names[-1]))
    cut = u.to_physical().samples * theta * kappa

    x_names = x_grid.space_names()
    t = np.broadcast_to(x_grid.coordinate("t"), x_grid.shape)
    xs = [np.broadcast_to(x_grid.coordinate(nm), x_grid.shape) for nm in x_names]
    y_prime, y_n, _ = holmgren_map(params, xs[:-1], xs[-1], t, direction="inverse")
    targets = {"t": t}
    for nm, values in zip(names, list(y_prime) + [y_n]):
        targets[nm] = values
    coords = []
    for axis in grid.axes:
        coords.append((targets[axis.name] - axis.start) / axis.spacing)
    coords = np.stack([np.asarray(c, dtype=float).ravel() for c in coords])

    def resample(part):
        return map_coordinates(part, coords, order=3, mode="grid-constant", cval=0.0,
                               prefilter=True).reshape(x_grid.shape)

    pushed = resample(cut.real) + 1j * resample(cut.imag)
    # the spline prefilter is nonlocal; keep exact zeros where every
    # neighbouring source sample is zero
    nonzero = (cut != 0).astype(float)
    reach = map_coordinates(nonzero, coords, order=1, mode="grid-constant", cval=0.0,
                            prefilter=False).reshape(x_grid.shape)
    pushed[(t <= 0) | (y_n <= 0) | (reach == 0)] = 0.0
    return Field(x_grid, pushed * np.exp(params.tau0 * t))
