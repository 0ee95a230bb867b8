"""FFT quantization on uniform periodic grids.

Fourier convention: ``u_hat(tau, xi) = int exp(-i t tau - i x.xi) u dt dx``,
which is numpy's forward sign. A Fourier-side :class:`Field` stores
``cell_volume * fftn(samples)`` so that
``int |u|^2 = (2 pi)^-d int |u_hat|^2``
holds exactly on the discrete grid.

Operators with ``x``-dependent coefficients are realized with the
coefficient applied after the multiplier in every term (left, or
Kohn-Nirenberg, quantization).
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import fft as sfft

from .errors import CausalityViolation, ConfigError
from .frac_ops import drift_symbol, frac_symbol, h_multiplier
from .params import ProblemParams

__all__ = [
    "Axis",
    "GridSpec",
    "Field",
    "Duals",
    "apply_multiplier",
    "spectral_derivative",
    "apply_P",
    "apply_P_psi",
    "apply_P_reference",
    "apply_shifted_P",
    "anisotropic_norm",
    "weighted_mass",
    "PartitionSpec",
    "PartitionPiece",
    "build_partition",
    "apply_shifted_z_operator",
]

CAUSALITY_TOL = 1e-12


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("CARLEMAN_LAB_THREADS", "1")))
    except ValueError:
        return 1


def _fftn(a, axes=None):
    return sfft.fftn(a, axes=axes, workers=_workers())


def _ifftn(a, axes=None):
    return sfft.ifftn(a, axes=axes, workers=_workers())


# ------------------------------------------------------------------- grids


@dataclass(frozen=True)
class Axis:
    """One periodic axis: ``count`` points ``start + j * length / count``."""

    name: str
    start: float
    length: float
    count: int

    def __post_init__(self):
        if self.count < 2 or self.count & (self.count - 1):
            raise ConfigError(f"axis {self.name!r}: count={self.count} is not a power of two")
        if not self.length > 0:
            raise ConfigError(f"axis {self.name!r}: length must be positive")

    @property
    def spacing(self) -> float:
        return self.length / self.count

    @property
    def points(self) -> np.ndarray:
        return self.start + self.spacing * np.arange(self.count)

    @property
    def frequencies(self) -> np.ndarray:
        return 2.0 * np.pi * sfft.fftfreq(self.count, self.spacing)

    def refined(self, factor: int = 2) -> "Axis":
        return Axis(self.name, self.start, self.length, self.count * factor)


@dataclass(frozen=True)
class Duals:
    """Broadcastable dual variables of a grid; missing axes are ``None``."""

    tau: np.ndarray | None
    xi: tuple
    sigma: np.ndarray | None

    @property
    def xi_sq(self):
        return sum(c ** 2 for c in self.xi) if self.xi else 0.0


@dataclass(frozen=True)
class GridSpec:
    """Tensor grid over ``(t, x_1..x_n[, z])``; ``y`` axes play the role of ``x``."""

    axes: tuple

    def __post_init__(self):
        names = [a.name for a in self.axes]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate axis names {names}")
        object.__setattr__(self, "axes", tuple(self.axes))

    @classmethod
    def build(cls, t=None, x=(), z=None, space="x") -> "GridSpec":
        """Build from ``(start, length, count)`` triples."""
        axes = []
        if t is not None:
            axes.append(Axis("t", *t))
        for j, spec in enumerate(x, start=1):
            axes.append(Axis(f"{space}{j}", *spec))
        if z is not None:
            axes.append(Axis("z", *z))
        return cls(tuple(axes))

    @property
    def names(self) -> list:
        return [a.name for a in self.axes]

    @property
    def shape(self) -> tuple:
        return tuple(a.count for a in self.axes)

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def cell_volume(self) -> float:
        return math.prod(a.spacing for a in self.axes)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ConfigError(f"grid has no axis {name!r}") from None

    def has(self, name: str) -> bool:
        return name in self.names

    def axis(self, name: str) -> Axis:
        return self.axes[self.index(name)]

    def space_names(self) -> list:
        return [a.name for a in self.axes if a.name not in ("t", "z")]

    def _broadcast(self, name, values):
        shape = [1] * self.ndim
        shape[self.index(name)] = -1
        return values.reshape(shape)

    def coordinate(self, name: str) -> np.ndarray:
        return self._broadcast(name, self.axis(name).points)

    def frequency(self, name: str) -> np.ndarray:
        return self._broadcast(name, self.axis(name).frequencies)

    def duals(self) -> Duals:
        tau = self.frequency("t") if self.has("t") else None
        sigma = self.frequency("z") if self.has("z") else None
        xi = tuple(self.frequency(nm) for nm in self.space_names())
        return Duals(tau, xi, sigma)

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(tuple(a.refined(factor) for a in self.axes))

    def to_dict(self) -> dict:
        return {"axes": [{"name": a.name, "start": a.start, "length": a.length,
                          "count": a.count} for a in self.axes]}


@dataclass
class Field:
    """Complex samples on a grid, tagged physical or Fourier side."""

    grid: GridSpec
    samples: np.ndarray
    side: str = "physical"

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex)
        if self.samples.shape != self.grid.shape:
            raise ConfigError(f"samples shape {self.samples.shape} != grid {self.grid.shape}")
        if self.side not in ("physical", "fourier"):
            raise ConfigError(f"unknown side {self.side!r}")

    @classmethod
    def from_function(cls, grid: GridSpec, fn: Callable) -> "Field":
        """Sample ``fn(**coordinates)`` with broadcastable coordinate arrays."""
        coords = {nm: grid.coordinate(nm) for nm in grid.names}
        values = np.broadcast_to(fn(**coords), grid.shape)
        return cls(grid, np.array(values, dtype=complex))

    def to_fourier(self) -> "Field":
        if self.side == "fourier":
            return self
        return Field(self.grid, self.grid.cell_volume * _fftn(self.samples), "fourier")

    def to_physical(self) -> "Field":
        if self.side == "physical":
            return self
        return Field(self.grid, _ifftn(self.samples) / self.grid.cell_volume, "physical")

    def l2_mass(self) -> float:
        """``int |u|^2`` on the physical side."""
        phys = self.to_physical().samples
        return float(np.sum(np.abs(phys) ** 2) * self.grid.cell_volume)

    def norm(self) -> float:
        return math.sqrt(self.l2_mass())

    def with_samples(self, samples) -> "Field":
        return Field(self.grid, samples, self.side)

    def __add__(self, other):
        return self.with_samples(self.samples + _samples(other))

    def __sub__(self, other):
        return self.with_samples(self.samples - _samples(other))

    def __mul__(self, c):
        return self.with_samples(self.samples * _samples(c))

    __rmul__ = __mul__

    # flat binary container + JSON sidecar
    MAGIC = b"CLF1"

    def save(self, path) -> Path:
        path = Path(path)
        header = bytearray(self.MAGIC)
        header += struct.pack("<BI", 1 if self.side == "fourier" else 0, self.grid.ndim)
        for a in self.grid.axes:
            name = a.name.encode()
            header += struct.pack("<I", len(name)) + name
            header += struct.pack("<Qdd", a.count, a.start, a.spacing)
        data = np.ascontiguousarray(self.samples, dtype="<c8")
        with open(path, "wb") as fh:
            fh.write(bytes(header))
            fh.write(data.tobytes())
        sidecar = {"format": "CLF1", "dtype": "complex64-le", "side": self.side,
                   **self.grid.to_dict()}
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2))
        return path

    @classmethod
    def load(cls, path) -> "Field":
        raw = Path(path).read_bytes()
        if raw[:4] != cls.MAGIC:
            raise ConfigError(f"{path}: not a CLF1 field file")
        side, ndim = struct.unpack_from("<BI", raw, 4)
        pos = 9
        axes = []
        for _ in range(ndim):
            (size,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            name = raw[pos:pos + size].decode()
            pos += size
            count, start, spacing = struct.unpack_from("<Qdd", raw, pos)
            pos += 24
            axes.append(Axis(name, start, spacing * count, int(count)))
        grid = GridSpec(tuple(axes))
        data = np.frombuffer(raw, dtype="<c8", offset=pos).reshape(grid.shape)
        return cls(grid, data.astype(complex), "fourier" if side else "physical")


def _samples(obj):
    return obj.samples if isinstance(obj, Field) else obj


# ------------------------------------------------------------- multipliers

Multiplier = Callable[[Duals], np.ndarray]


def apply_multiplier(u: Field, m: Multiplier) -> Field:
    """``F^-1(m * F(u))`` with ``m`` evaluated on the discrete dual grid."""
    uh = _fftn(u.to_physical().samples)
    return Field(u.grid, _ifftn(m(u.grid.duals()) * uh))


def spectral_derivative(u: Field, name: str, order: int = 1) -> Field:
    """``d^order u / d(name)^order`` by a one-dimensional FFT along ``name``."""
    ax = u.grid.index(name)
    k = u.grid.frequency(name)
    uh = sfft.fft(u.to_physical().samples, axis=ax, workers=_workers())
    return Field(u.grid, sfft.ifft((1j * k) ** order * uh, axis=ax, workers=_workers()))


def _check_causal(u: Field):
    if not u.grid.has("t"):
        return
    ax = u.grid.index("t")
    t = u.grid.axis("t").points
    samples = np.moveaxis(u.samples, ax, 0)
    scale = np.max(np.abs(samples)) if samples.size else 0.0
    past = samples[t <= 0]
    if past.size and np.max(np.abs(past)) > CAUSALITY_TOL * max(scale, 1e-300):
        raise CausalityViolation("field is nonzero at t <= 0")


def _space_setup(params: ProblemParams, grid: GridSpec):
    names = grid.space_names()
    if len(names) != params.n:
        raise ConfigError(f"grid has {len(names)} space axes, params.n={params.n}")
    x = [grid.coordinate(nm) for nm in names]
    f = 1.0 + 4.0 * sum(c ** 2 for c in x[:-1])
    return x, f


def _unshifted_terms(params, grid, uh, duals):
    """Fourier-side scalar part plus the coefficient terms of ``p``."""
    x, f = _space_setup(params, grid)
    tau, xi = duals.tau, duals.xi
    drift = params.X / params.T * drift_symbol(params.alpha, params.tau0, tau)
    scalar = frac_symbol(params.alpha, params.tau0, tau) + sum(c ** 2 for c in xi[:-1])
    out = _ifftn((scalar + drift * xi[-1]) * uh)
    for xj, xij in zip(x[:-1], xi[:-1]):
        out += 4.0 * xj * _ifftn(xij * xi[-1] * uh)
    return out, drift, x, f


def apply_P(params: ProblemParams, u: Field) -> Field:
    """Left quantization of the total symbol ``p(x; tau, xi)``.

    Needs a ``t`` axis and ``params.n`` space axes; a ``z`` axis, if any, is
    carried along untouched.

    Raises
    ------
    CausalityViolation
        If ``u`` is nonzero at ``t <= 0``.
    """
    _check_causal(u)
    grid = u.grid
    duals = grid.duals()
    uh = _fftn(u.to_physical().samples)
    out, _, _, f = _unshifted_terms(params, grid, uh, duals)
    out += f * _ifftn(duals.xi[-1] ** 2 * uh)
    return Field(grid, out)


def apply_P_psi(params: ProblemParams, u: Field, sigma_shift: float = 0.0) -> Field:
    """Left quantization of ``p(x; tau, xi + i|sigma| grad psi)`` on ``(t, x, z)``.

    With ``d = x_n - X`` the monomials are
    ``f (xi_n + i|sigma| d)^2 = f xi_n^2 + 2i f d xi_n |sigma| - f d^2 sigma^2``,
    ``4 g (xi_n + i|sigma| d)`` and the drift term, each applied as a
    multiplier followed by its coefficient.

    A nonzero ``sigma_shift`` (``beta``) returns
    ``e^{-i beta z} P_psi(e^{i beta z} u)``: the modulated field is handled
    through its envelope ``u``, so ``beta`` need not be resolved by the grid.
    """
    _check_causal(u)
    grid = u.grid
    if not grid.has("z"):
        raise ConfigError("apply_P_psi needs a z axis")
    duals = grid.duals()
    s = np.abs(duals.sigma + sigma_shift)
    uh = _fftn(u.to_physical().samples)
    out, drift, x, f = _unshifted_terms(params, grid, uh, duals)
    d = x[-1] - params.X
    xin = duals.xi[-1]
    out += f * _ifftn(xin ** 2 * uh)
    out += 1j * d * _ifftn(drift * s * uh)
    for xj, xij in zip(x[:-1], duals.xi[:-1]):
        out += 4j * d * xj * _ifftn(xij * s * uh)
    out += 2j * f * d * _ifftn(xin * s * uh)
    out -= f * d ** 2 * _ifftn(s ** 2 * uh)
    return Field(grid, out)


def apply_shifted_P(params: ProblemParams, w: Field, beta: float,
                    ordering: str = "composed") -> Field:
    """``p(x, D_t, D_x + i|beta| grad psi)`` on a ``(t, x)`` field.

    ``ordering="composed"`` substitutes ``D_n -> D_n + i|beta|(x_n - X)`` as an
    operator, so the result equals ``e^{|beta| psi} P e^{-|beta| psi}``
    exactly in the continuum. ``ordering="left"`` quantizes the shifted
    symbol with coefficients after multipliers; it differs from the composed
    form by ``|beta| f w``.
    """
    if ordering not in ("composed", "left"):
        raise ConfigError(f"unknown ordering {ordering!r}")
    _check_causal(w)
    b = abs(beta)
    grid = w.grid
    duals = grid.duals()
    phys = w.to_physical().samples
    uh = _fftn(phys)
    out, drift, x, f = _unshifted_terms(params, grid, uh, duals)
    d = x[-1] - params.X
    xin = duals.xi[-1]
    out += 1j * b * d * _ifftn(drift * uh)
    for xj, xij in zip(x[:-1], duals.xi[:-1]):
        out += 4j * b * d * xj * _ifftn(xij * uh)
    if ordering == "left":
        out += f * _ifftn(xin ** 2 * uh)
        out += 2j * b * f * d * _ifftn(xin * uh)
        out -= f * (b * d) ** 2 * phys
    else:
        first = _ifftn(xin * uh) + 1j * b * d * phys
        out += f * (_ifftn(xin * _fftn(first)) + 1j * b * d * first)
    return Field(grid, out)


# ------------------------------------------------------------------ norms


def weighted_mass(u: Field, weight: Multiplier) -> float:
    """``(2 pi)^-d sum weight |u_hat|^2 dxi``; weight 1 gives the L2 mass."""
    uh = u.to_fourier().samples
    dual_cell = math.prod(2.0 * np.pi / a.length for a in u.grid.axes)
    w = np.broadcast_to(weight(u.grid.duals()), uh.shape)
    return float(np.sum(w * np.abs(uh) ** 2) * dual_cell / (2.0 * np.pi) ** u.grid.ndim)


def anisotropic_norm(u: Field, m: float, s: float, squared: bool = False) -> float:
    """Anisotropic Sobolev norm with weight ``(1 + |xi|^s + |tau|^m)^2``.

    On grids with a ``z`` axis the weight is ``(1 + |tau|^m + |xi|^s + |sigma|^s)^2``.
    At ``m = s = 0`` the weight is 9 everywhere, including the dual origin.
    """
    def weight(duals):
        total = 1.0
        if duals.tau is not None:
            total = total + np.abs(duals.tau) ** m
        if duals.xi:
            total = total + np.sqrt(duals.xi_sq) ** s
        if duals.sigma is not None:
            total = total + np.abs(duals.sigma) ** s
        return total ** 2

    value = weighted_mass(u, weight)
    return value if squared else math.sqrt(value)


# -------------------------------------------------------------- partition


def smooth_step(s):
    """C-infinity step: 0 for ``s <= 0``, 1 for ``s >= 1``."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class PartitionSpec:
    """Layout of a degree-0 partition in ``r = sigma^2 / (|xi|^2 + sigma^2 + |tau|^alpha)``.

    Piece 0 hands over to the rest on the ``r``-interval where
    ``delta1 <= sigma^2 / (|xi|^2 + |tau|^alpha) <= 2 delta1``; the remaining
    hand-overs are spread over ``(r_0, 1)`` with relative width ``overlap``.
    """

    count: int = 3
    overlap: float = 0.5
    alpha: float = 0.5
    delta1: float = 1.0


@dataclass(frozen=True)
class PartitionPiece:
    index: int
    transitions: tuple
    alpha: float

    def ratio(self, xi, tau, sigma):
        """Degree-0 angular variable ``r``; set to 0 at the origin."""
        xi_sq = _xi_sq(xi)
        sigma_sq = np.asarray(sigma, dtype=float) ** 2
        total = xi_sq + sigma_sq + np.abs(np.asarray(tau, dtype=float)) ** self.alpha
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(total > 0, sigma_sq / np.where(total > 0, total, 1.0), 0.0)
        return r

    def evaluate(self, xi, tau, sigma):
        r = self.ratio(xi, tau, sigma)
        value = np.ones_like(r)
        last = len(self.transitions)
        for k, (a, b) in enumerate(self.transitions):
            angle = 0.5 * np.pi * smooth_step((r - a) / (b - a))
            if k < self.index:
                value = value * np.sin(angle)
            elif k == self.index:
                value = value * np.cos(angle)
                break
        if self.index > last:
            raise ConfigError("piece index out of range")
        return value

    def __call__(self, duals: Duals):
        sigma = duals.sigma if duals.sigma is not None else 0.0
        tau = duals.tau if duals.tau is not None else 0.0
        return self.evaluate(list(duals.xi), tau, sigma)


def _xi_sq(xi):
    if isinstance(xi, (list, tuple)):
        return sum(np.asarray(c, dtype=float) ** 2 for c in xi)
    xi = np.asarray(xi, dtype=float)
    return xi ** 2 if xi.ndim == 0 else np.sum(xi ** 2, axis=-1)


def build_partition(spec: PartitionSpec) -> list:
    """Smooth pieces ``chi_nu`` with ``sum chi_nu^2 = 1``.

    Piece ``k`` is ``prod_{i<k} sin(theta_i) * cos(theta_k)`` (the last piece
    has no cosine factor), with ``theta_i = pi/2 * step_i(r)``. The nested form
    makes the sum of squares telescope to one.

    Raises
    ------
    ConfigError
        If the hand-over intervals are not increasing and disjoint inside
        ``(0, 1)``.
    """
    if spec.count < 2:
        raise ConfigError("a partition needs at least two pieces")
    if not (0.0 < spec.overlap <= 1.0 and spec.delta1 > 0 and 0 < spec.alpha < 1):
        raise ConfigError(f"invalid partition parameters {spec}")
    a0 = spec.delta1 / (1.0 + spec.delta1)
    b0 = 2.0 * spec.delta1 / (1.0 + 2.0 * spec.delta1)
    transitions = [(a0, b0)]
    rest = spec.count - 2
    if rest:
        spacing = (1.0 - b0) / (rest + 1)
        half = 0.5 * spec.overlap * spacing
        for k in range(1, rest + 1):
            centre = b0 + k * spacing
            transitions.append((centre - half, centre + half))
    for (a, b), (c, _) in zip(transitions, transitions[1:] + [(1.0, None)]):
        if not (0.0 < a < b <= c <= 1.0):
            raise ConfigError(f"hand-over intervals overlap or leave (0, 1): {transitions}")
    return [PartitionPiece(k, tuple(transitions), spec.alpha) for k in range(spec.count)]


# ------------------------------------------------------- shifted z-operators


def _h_difference(a, b):
    """``h(a) - h(b)`` without cancellation."""
    root_a, root_b = np.sqrt(1.0 + a ** 2), np.sqrt(1.0 + b ** 2)
    return (a - b) * (a + b) / ((root_a + root_b) * (h_multiplier(a) + h_multiplier(b)))


def shifted_z_multiplier(sigma, beta: float, j: int, k: int, mode: str):
    sigma = np.asarray(sigma, dtype=float)
    shifted = sigma + beta
    if mode == "raw":
        return h_multiplier(shifted) ** j * shifted ** k
    if mode == "Gj":
        return (np.abs(shifted) - abs(beta)) ** j
    if mode == "Hjk":
        return _h_difference(shifted, np.full_like(sigma, beta)) ** j * sigma ** k
    raise ConfigError(f"unknown mode {mode!r}")


def apply_shifted_z_operator(g: Field, beta: float, j: int = 0, k: int = 0,
                             mode: str = "raw") -> Field:
    """One-dimensional shifted multipliers on a ``z`` field.

    ``raw`` gives ``e^{-i beta z} h(D_z)^j D_z^k (e^{i beta z} g)``, computed as
    the multiplier ``h(sigma + beta)^j (sigma + beta)^k``; ``Gj`` uses
    ``(|sigma + beta| - |beta|)^j``; ``Hjk`` uses
    ``(h(sigma + beta) - h(beta))^j sigma^k``.
    """
    if j < 0 or k < 0:
        raise ConfigError("j and k must be nonnegative")
    if g.grid.names != ["z"]:
        raise ConfigError("apply_shifted_z_operator expects a field on a single z axis")
    return apply_multiplier(g, lambda duals: shifted_z_multiplier(duals.sigma, beta, j, k, mode))


def apply_P_reference(params: ProblemParams, u: Field) -> Field:
    """Coordinate-space realization of ``P``, used as an independent check of :func:`apply_P`.

    Time part: ``e^{tau0 t}`` times the L1 Caputo derivative of
    ``e^{-tau0 t} u`` plus ``X/T`` times the L1-based fractional integral of
    order ``1 - alpha`` of ``d_{x_n}``. Space part: the chain-rule form
    ``-sum_j (d_j + 2 x_j d_n)^2 - d_n^2`` built from successive one-dimensional
    spectral derivatives, minus its first-order remainder ``2 (n-1) d_n`` so that
    it matches the printed total symbol.
    """
    from .frac_ops import caputo_l1_array, fractional_integral

    _check_causal(u)
    grid = u.grid
    names = grid.space_names()
    x, _ = _space_setup(params, grid)
    t_axis = grid.axis("t")
    ax = grid.index("t")
    t = t_axis.points
    start = int(np.argmin(np.abs(t)))
    if abs(t[start]) > 1e-9 * t_axis.spacing:
        raise ConfigError("the t axis must contain t = 0 as a grid point")
    weight = np.exp(params.tau0 * grid.coordinate("t"))
    plain = u.samples / weight

    def causal(op, values):
        moved = np.moveaxis(values, ax, 0)
        out = np.zeros_like(moved)
        out[start:] = op(moved[start:])
        return np.moveaxis(out, 0, ax)

    dt = t_axis.spacing
    time_part = causal(lambda v: caputo_l1_array(v, dt, params.alpha), plain)
    dn_plain = spectral_derivative(Field(grid, plain), names[-1]).samples
    time_part = time_part + params.X / params.T * causal(
        lambda v: fractional_integral(v, dt, 1.0 - params.alpha), dn_plain)

    un = spectral_derivative(u, names[-1])
    laplace = spectral_derivative(un, names[-1]).samples
    for xj, nm in zip(x[:-1], names[:-1]):
        vj = spectral_derivative(u, nm) + 2.0 * xj * un.samples
        second = spectral_derivative(vj, nm) + 2.0 * xj * spectral_derivative(vj, names[-1]).samples
        laplace = laplace + second.samples - 2.0 * un.samples
    return Field(grid, weight * time_part - laplace)
