"""Latent position models for multiplex Poisson dot-product graphs.

Edge ``(i, j)`` in layer ``l`` carries a Poisson process whose intensity at
time ``t`` is the inner product of a dynamic node position ``X_i(t)`` and a
static layer position ``Y_{lj}``.  Time is normalised to the window (0, 1].

Indices are 0-based everywhere.  Layer positions are stored layer-major: row
``l * N + j`` of ``layer_positions`` is ``Y_{lj}``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ArgumentError, ConfigError, ModelValidityError

__all__ = [
    "Trajectory",
    "BlockTrajectory",
    "PiecewiseLinearTrajectory",
    "FunctionTrajectory",
    "LatentModel",
    "StepSpec",
    "BlockModelSpec",
    "PositivityReport",
    "intensity_at",
    "validate_positivity",
    "build_smooth_block_model",
    "build_discontinuous_block_model",
    "build_block_model",
    "contiguous_groups",
    "default_smooth_spec",
    "default_discontinuous_spec",
    "spec_from_dict",
    "spec_to_dict",
    "constant_model",
    "build_group_wave_model",
]

GAUSS_NODES = 64
BOUND_GRID = 256
BOUND_SAFETY = 1.1


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _gauss_legendre(a, b, n=GAUSS_NODES):
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


class Trajectory:
    """Node trajectories ``t -> X(t)`` with ``X(t)`` of shape ``(n_nodes, dim)``.

    Subclasses provide ``__call__``; integrals and thinning bounds fall back to
    Gauss-Legendre quadrature and a grid search when no closed form exists.
    """

    n_nodes: int
    dim: int
    #: interior discontinuity locations, sorted, strictly inside (0, 1)
    breakpoints: tuple = ()

    def __call__(self, t):
        raise NotImplementedError

    @property
    def segments(self):
        """Continuity segments ``(a, b)`` covering (0, 1]."""
        edges = (0.0,) + tuple(self.breakpoints) + (1.0,)
        return list(zip(edges[:-1], edges[1:]))

    def rows(self, nodes, times):
        """Positions of ``nodes[k]`` at ``times[k]``, shape ``(K, dim)``."""
        nodes = np.asarray(nodes, dtype=np.int64)
        times = np.asarray(times, dtype=float)
        out = np.empty((len(nodes), self.dim))
        for start in range(0, len(nodes), 2048):
            sl = slice(start, start + 2048)
            pos = self(times[sl])
            out[sl] = pos[np.arange(pos.shape[0]), nodes[sl]]
        return out

    def integral(self, a, b):
        """``int_a^b X(t) dt``, shape ``(n_nodes, dim)``."""
        total = np.zeros((self.n_nodes, self.dim))
        for lo, hi in self._pieces(a, b):
            t, w = _gauss_legendre(lo, hi)
            total += np.tensordot(w, self(t), axes=(0, 0))
        return total

    def bin_averages(self, n_bins):
        """``M * int_{B_m} X(t) dt`` for every bin, shape ``(M, n_nodes, dim)``."""
        edges = np.arange(n_bins + 1) / n_bins
        return np.stack([n_bins * self.integral(edges[m], edges[m + 1])
                         for m in range(n_bins)])

    def intensity_bound(self, Y, segment):
        """Upper bound of ``X_i(t) . Y_k`` over a continuity segment, ``(N, K)``.

        Generic fallback: grid maximum times a safety factor.
        """
        a, b = self.segments[segment]
        t = np.linspace(a, b, BOUND_GRID)
        t[0] = np.nextafter(a, b)
        best = None
        for start in range(0, BOUND_GRID, 32):
            vals = np.einsum("tnd,kd->nkt", self(t[start:start + 32]), Y).max(axis=2)
            best = vals if best is None else np.maximum(best, vals)
        return np.maximum(best, 0.0) * BOUND_SAFETY

    def _pieces(self, a, b):
        cuts = [a] + [p for p in self.breakpoints if a < p < b] + [b]
        return list(zip(cuts[:-1], cuts[1:]))


class BlockTrajectory(Trajectory):
    """Closed-form group trajectories ``X_i(t) = mu_{z_i}(t)`` in two dimensions.

    ``mu_g(t) = [c1_g + R_g sin(2 pi t + theta_g), c2_g + R_g cos(2 pi t + theta_g) + delta_g(t)]``
    where ``delta_g`` is an optional step function with levels
    ``multipliers[k] * R_g`` on the k-th segment between ``breakpoints``.
    """

    dim = 2

    def __init__(self, groups, c1, c2, radius, phase, breakpoints=(), multipliers=None):
        self.groups = np.asarray(groups, dtype=np.int64)
        self.n_nodes = len(self.groups)
        self.c1 = np.asarray(c1, dtype=float)
        self.c2 = np.asarray(c2, dtype=float)
        self.radius = np.asarray(radius, dtype=float)
        self.phase = np.asarray(phase, dtype=float)
        self.breakpoints = tuple(float(b) for b in breakpoints)
        if multipliers is None:
            multipliers = np.zeros(len(self.breakpoints) + 1)
        self.multipliers = np.asarray(multipliers, dtype=float)
        if len(self.multipliers) != len(self.breakpoints) + 1:
            raise ArgumentError("need one step multiplier per segment")

    def step(self, t):
        """``delta_g(t)`` for every group, shape ``t.shape + (G,)``."""
        t = np.asarray(t, dtype=float)
        seg = np.searchsorted(np.asarray(self.breakpoints), t, side="left")
        return self.multipliers[seg][..., None] * self.radius

    def group_positions(self, t):
        t = np.asarray(t, dtype=float)
        arg = 2.0 * np.pi * t[..., None] + self.phase
        first = self.c1 + self.radius * np.sin(arg)
        second = self.c2 + self.radius * np.cos(arg)
        if self.breakpoints:
            second = second + self.step(t)
        return np.stack([first, second], axis=-1)

    def __call__(self, t):
        return self.group_positions(t)[..., self.groups, :]

    def rows(self, nodes, times):
        g = self.groups[np.asarray(nodes, dtype=np.int64)]
        times = np.asarray(times, dtype=float)
        arg = 2.0 * np.pi * times + self.phase[g]
        second = self.c2[g] + self.radius[g] * np.cos(arg)
        if self.breakpoints:
            seg = np.searchsorted(np.asarray(self.breakpoints), times, side="left")
            second = second + self.multipliers[seg] * self.radius[g]
        return np.column_stack([self.c1[g] + self.radius[g] * np.sin(arg), second])

    def _antiderivative(self, t):
        # group-level F(t) = int_0^t mu_g, shape t.shape + (G, 2)
        t = np.asarray(t, dtype=float)
        arg = 2.0 * np.pi * t[..., None] + self.phase
        two_pi = 2.0 * np.pi
        first = self.c1 * t[..., None] - self.radius * (np.cos(arg) - np.cos(self.phase)) / two_pi
        second = self.c2 * t[..., None] + self.radius * (np.sin(arg) - np.sin(self.phase)) / two_pi
        if self.breakpoints:
            edges = np.concatenate([[0.0], self.breakpoints, [1.0]])
            covered = np.clip(t[..., None] - edges[:-1], 0.0, np.diff(edges))
            second = second + (covered @ self.multipliers)[..., None] * self.radius
        return np.stack([first, second], axis=-1)

    def group_integral(self, a, b):
        """``int_a^b mu_g(t) dt`` per group, shape ``(G, 2)``."""
        if self.breakpoints:
            total = np.zeros((len(self.radius), 2))
            for lo, hi in self._pieces(a, b):
                total += self._smooth_group_integral(lo, hi)
                seg = np.searchsorted(np.asarray(self.breakpoints), hi, side="left")
                total[:, 1] += (hi - lo) * self.multipliers[seg] * self.radius
            return total
        return self._smooth_group_integral(a, b)

    def _smooth_group_integral(self, a, b):
        two_pi = 2.0 * np.pi
        arg_a = two_pi * a + self.phase
        arg_b = two_pi * b + self.phase
        # cos(x) - cos(y) = -2 sin((x+y)/2) sin((x-y)/2), stable for short intervals
        half = np.pi * (b - a)
        mid = 0.5 * (arg_a + arg_b)
        dcos = -2.0 * np.sin(mid) * np.sin(half)
        dsin = 2.0 * np.cos(mid) * np.sin(half)
        first = self.c1 * (b - a) - self.radius * dcos / two_pi
        second = self.c2 * (b - a) + self.radius * dsin / two_pi
        return np.column_stack([first, second])

    def integral(self, a, b):
        return self.group_integral(a, b)[self.groups]

    def bin_averages(self, n_bins):
        edges = np.arange(n_bins + 1) / n_bins
        means = np.stack([n_bins * self.group_integral(edges[m], edges[m + 1])
                          for m in range(n_bins)])
        return means[:, self.groups, :]

    def intensity_bound(self, Y, segment):
        """Exact supremum over a full period of the sinusoid, plus the segment step.

        ``c . y + R ||y|| + delta_k y_2`` bounds ``mu_g(t) . y`` on segment ``k``.
        """
        Y = np.asarray(Y, dtype=float)
        c = np.column_stack([self.c1, self.c2])
        level = self.multipliers[segment] * self.radius
        bound = (c @ Y.T + self.radius[:, None] * np.linalg.norm(Y, axis=1)[None, :]
                 + level[:, None] * Y[:, 1][None, :])
        return np.maximum(bound, 0.0)[self.groups]


class PiecewiseLinearTrajectory(Trajectory):
    """Trajectories tabulated on a uniform grid ``t_k = k / K`` and linearly interpolated.

    ``values`` has shape ``(K + 1, n_nodes, dim)``.
    """

    def __init__(self, values):
        values = np.asarray(values, dtype=float)
        if values.ndim != 3 or values.shape[0] < 2:
            raise ArgumentError("values must have shape (K + 1, n_nodes, dim) with K >= 1")
        self.values = _readonly(values)
        self.n_knots = values.shape[0] - 1
        _, self.n_nodes, self.dim = values.shape
        # cumulative trapezoid integral at the knots
        h = 1.0 / self.n_knots
        steps = 0.5 * h * (values[1:] + values[:-1])
        self._cum = np.concatenate([np.zeros((1,) + values.shape[1:]), np.cumsum(steps, axis=0)])

    def _locate(self, t):
        t = np.asarray(t, dtype=float)
        k = np.clip(np.floor(t * self.n_knots).astype(np.int64), 0, self.n_knots - 1)
        return k, t * self.n_knots - k

    def __call__(self, t):
        k, w = self._locate(t)
        w = w[..., None, None]
        return (1.0 - w) * self.values[k] + w * self.values[k + 1]

    def rows(self, nodes, times):
        nodes = np.asarray(nodes, dtype=np.int64)
        k, w = self._locate(times)
        w = w[:, None]
        return (1.0 - w) * self.values[k, nodes] + w * self.values[k + 1, nodes]

    def _antiderivative(self, t):
        k, w = self._locate(t)
        h = 1.0 / self.n_knots
        s = (w * h)[..., None, None]
        slope = (self.values[k + 1] - self.values[k]) / h
        return self._cum[k] + s * self.values[k] + 0.5 * s * s * slope

    def integral(self, a, b):
        return self._antiderivative(b) - self._antiderivative(a)

    def bin_averages(self, n_bins):
        edges = np.arange(n_bins + 1) / n_bins
        F = self._antiderivative(edges)
        return n_bins * np.diff(F, axis=0)

    def intensity_bound(self, Y, segment):
        # the intensity is linear between knots, so its maximum sits on a knot
        Y = np.asarray(Y, dtype=float)
        best = None
        for start in range(0, self.n_knots + 1, 64):
            vals = np.einsum("tnd,kd->nkt", self.values[start:start + 64], Y).max(axis=2)
            best = vals if best is None else np.maximum(best, vals)
        return np.maximum(best, 0.0)


class FunctionTrajectory(Trajectory):
    """Trajectories given by a vectorised callable ``f(t) -> (len(t), n_nodes, dim)``."""

    def __init__(self, func: Callable, n_nodes: int, dim: int, breakpoints: Sequence[float] = ()):
        self.func = func
        self.n_nodes = int(n_nodes)
        self.dim = int(dim)
        self.breakpoints = tuple(sorted(float(b) for b in breakpoints))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.asarray(self.func(np.atleast_1d(t)), dtype=float)
        return out[0] if t.ndim == 0 else out


@dataclass(frozen=True)
class LatentModel:
    """Ground truth: node trajectories plus layer-major static layer positions."""

    trajectory: Trajectory
    layer_positions: np.ndarray
    n_layers: int
    groups: Optional[np.ndarray] = None
    layer_groups: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        Y = _readonly(self.layer_positions)
        object.__setattr__(self, "layer_positions", Y)
        n, d = self.trajectory.n_nodes, self.trajectory.dim
        if Y.shape != (n * self.n_layers, d):
            raise ArgumentError(
                f"layer positions must have shape {(n * self.n_layers, d)}, got {Y.shape}")
        if not np.all(np.isfinite(Y)):
            raise ModelValidityError("layer positions contain non-finite values")

    @property
    def n_nodes(self):
        return self.trajectory.n_nodes

    @property
    def dim(self):
        return self.trajectory.dim

    def positions(self, t):
        return self.trajectory(t)

    def layer_block(self, layer):
        n = self.n_nodes
        return self.layer_positions[layer * n:(layer + 1) * n]

    def intensity_matrix(self, t):
        """Unfolded intensity row block ``X(t) Y^T``, shape ``(N, N * L)``."""
        return self.trajectory(t) @ self.layer_positions.T


def _check_time(t, closed=True):
    lo_ok = t >= 0.0 if closed else t > 0.0
    if not (np.isfinite(t) and lo_ok and t <= 1.0):
        raise ArgumentError(f"time {t!r} outside the observation window")


def _check_index(name, value, bound):
    if not (0 <= value < bound):
        raise ArgumentError(f"{name} index {value} out of range [0, {bound})")


def intensity_at(model: LatentModel, i: int, j: int, layer: int, t: float) -> float:
    """Intensity ``X_i(t) . Y_{layer, j}`` of edge ``i -> j`` in ``layer``.

    ``t`` may be any point of [0, 1]; the trajectories extend continuously to 0.
    Raises ``ModelValidityError`` if the value is not strictly positive.
    """
    _check_index("source", i, model.n_nodes)
    _check_index("destination", j, model.n_nodes)
    _check_index("layer", layer, model.n_layers)
    _check_time(t)
    x = model.trajectory.rows([i], [t])[0]
    value = float(x @ model.layer_positions[layer * model.n_nodes + j])
    if not value > 0.0:
        raise ModelValidityError(
            f"nonpositive intensity {value} on edge ({i}, {j}) layer {layer} at t={t}")
    return value


@dataclass
class PositivityReport:
    min_intensity: float
    argmin: tuple
    first_violation: Optional[tuple]
    n_violations: int
    n_times: int

    @property
    def ok(self):
        return self.n_violations == 0


def validate_positivity(model: LatentModel, grid_resolution: int = 100) -> PositivityReport:
    """Scan all edge intensities on a uniform grid over [0, 1].

    Tuples are ``(source, destination, layer, t)``.  Breakpoints and their
    right neighbours are added to the grid so every step level is visited.
    """
    if grid_resolution < 2:
        raise ArgumentError("grid_resolution must be >= 2")
    grid = list(np.linspace(0.0, 1.0, grid_resolution))
    for b in model.trajectory.breakpoints:
        grid += [b, np.nextafter(b, 2.0)]
    grid = np.unique(grid)
    n, L = model.n_nodes, model.n_layers
    Y = model.layer_positions
    best, argmin, first, count = np.inf, None, None, 0
    for t in grid:
        lam = model.trajectory(t) @ Y.T
        k = int(np.argmin(lam))
        if lam.flat[k] < best:
            best = float(lam.flat[k])
            i, col = divmod(k, n * L)
            argmin = (i, col % n, col // n, float(t))
        bad = lam <= 0.0
        nbad = int(bad.sum())
        if nbad and first is None:
            i, col = divmod(int(np.flatnonzero(bad)[0]), n * L)
            first = (i, col % n, col // n, float(t))
        count += nbad
    return PositivityReport(best, argmin, first, count, len(grid))


@dataclass(frozen=True)
class StepSpec:
    """Step offsets added to the second coordinate: level ``multipliers[k] * R_g``
    on the k-th interval ``(taus[k-1], taus[k]]``."""

    taus: tuple = (0.25, 0.5, 0.75)
    multipliers: tuple = (0.0, 0.4, -0.3, 0.7)

    def __post_init__(self):
        taus = tuple(float(t) for t in self.taus)
        object.__setattr__(self, "taus", taus)
        object.__setattr__(self, "multipliers", tuple(float(m) for m in self.multipliers))
        if any(b <= a for a, b in zip(taus[:-1], taus[1:])) or not all(0 < t < 1 for t in taus):
            raise ArgumentError(f"step locations must be increasing inside (0, 1): {taus}")
        if len(self.multipliers) != len(taus) + 1:
            raise ArgumentError("need len(taus) + 1 step multipliers")


@dataclass
class BlockModelSpec:
    """Parameters of the sinusoidal block model.

    ``c1, c2, radius, phase`` have one entry per dynamic group;
    ``offset`` and ``angle`` have shape ``(n_layers, n_groups_layer)``.
    Group memberships are either given explicitly or derived from the
    fractions by contiguous assignment (see ``contiguous_groups``).
    """

    c1: Sequence[float]
    c2: Sequence[float]
    radius: Sequence[float]
    phase: Sequence[float]
    offset: Sequence[Sequence[float]]
    angle: Sequence[Sequence[float]]
    dynamic_fractions: Optional[Sequence[float]] = None
    layer_fractions: Optional[Sequence[float]] = None
    group_of_node: Optional[Sequence[int]] = None
    layer_group_of_node: Optional[Sequence[Sequence[int]]] = None
    discontinuity: Optional[StepSpec] = None

    def __post_init__(self):
        for name in ("c1", "c2", "radius", "phase"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        self.offset = np.atleast_2d(np.asarray(self.offset, dtype=float))
        self.angle = np.atleast_2d(np.asarray(self.angle, dtype=float))
        g1 = len(self.c1)
        if g1 < 1 or any(len(getattr(self, n)) != g1 for n in ("c2", "radius", "phase")):
            raise ArgumentError("dynamic parameters need one value per group (at least one group)")
        if self.offset.shape != self.angle.shape or self.offset.shape[1] < 1:
            raise ArgumentError("layer offsets and angles must share shape (n_layers, n_groups_layer)")

    @property
    def n_groups_dynamic(self):
        return len(self.c1)

    @property
    def n_groups_layer(self):
        return self.offset.shape[1]

    @property
    def n_layers(self):
        return self.offset.shape[0]

    def dynamic_groups(self, n_nodes):
        if self.group_of_node is not None:
            z = np.asarray(self.group_of_node, dtype=np.int64)
            if len(z) != n_nodes:
                raise ArgumentError("group_of_node length differs from n_nodes")
        else:
            fr = self.dynamic_fractions
            if fr is None:
                fr = np.full(self.n_groups_dynamic, 1.0 / self.n_groups_dynamic)
            z = contiguous_groups(n_nodes, fr)
        if z.min() < 0 or z.max() >= self.n_groups_dynamic:
            raise ArgumentError("dynamic group label out of range")
        return z

    def layer_groups(self, n_nodes, n_layers):
        if self.layer_group_of_node is not None:
            v = np.atleast_2d(np.asarray(self.layer_group_of_node, dtype=np.int64))
            if v.shape[0] == 1 and n_layers > 1:
                v = np.repeat(v, n_layers, axis=0)
            if v.shape != (n_layers, n_nodes):
                raise ArgumentError("layer_group_of_node must have shape (n_layers, n_nodes)")
        else:
            fr = self.layer_fractions
            if fr is None:
                fr = self.dynamic_fractions if (self.dynamic_fractions is not None and
                                                len(self.dynamic_fractions) == self.n_groups_layer) \
                    else np.full(self.n_groups_layer, 1.0 / self.n_groups_layer)
            v = np.tile(contiguous_groups(n_nodes, fr), (n_layers, 1))
        if v.min() < 0 or v.max() >= self.n_groups_layer:
            raise ArgumentError("layer group label out of range")
        return v

    def gamma(self):
        """Layer-group positions, shape ``(n_layers, n_groups_layer, 2)``."""
        return np.stack([self.offset + np.cos(self.angle), self.offset + np.sin(self.angle)], axis=-1)


def contiguous_groups(n_nodes, fractions):
    """Assign nodes to groups in contiguous index blocks.

    Group ``g`` (except the last) receives ``floor(fractions[g] * n)`` nodes;
    the last group takes the remainder.
    """
    fractions = np.asarray(fractions, dtype=float)
    if np.any(fractions < 0) or not np.isclose(fractions.sum(), 1.0):
        raise ArgumentError(f"group fractions must be nonnegative and sum to 1: {fractions}")
    counts = np.floor(fractions[:-1] * n_nodes + 1e-9).astype(np.int64)
    counts = np.append(counts, n_nodes - counts.sum())
    return np.repeat(np.arange(len(fractions)), counts)


def build_block_model(spec: BlockModelSpec, n_nodes: int, n_layers: Optional[int] = None,
                      validate: bool = True) -> LatentModel:
    n_layers = spec.n_layers if n_layers is None else int(n_layers)
    if n_layers > spec.n_layers:
        raise ArgumentError(f"spec defines {spec.n_layers} layers, {n_layers} requested")
    if n_nodes < 1 or n_layers < 1:
        raise ArgumentError("need at least one node and one layer")
    z = spec.dynamic_groups(n_nodes)
    v = spec.layer_groups(n_nodes, n_layers)
    step = spec.discontinuity
    traj = BlockTrajectory(
        z, spec.c1, spec.c2, spec.radius, spec.phase,
        breakpoints=step.taus if step else (),
        multipliers=step.multipliers if step else None)
    gamma = spec.gamma()[:n_layers]
    Y = np.concatenate([gamma[l][v[l]] for l in range(n_layers)])
    model = LatentModel(traj, Y, n_layers, groups=z, layer_groups=v)
    if validate:
        report = validate_positivity(model, 100)
        if not report.ok:
            raise ModelValidityError(
                f"block model has nonpositive intensity {report.min_intensity:.6g} at "
                f"(src, dst, layer, t) = {report.first_violation}")
    return model


def build_smooth_block_model(spec: BlockModelSpec, n_nodes: int, n_layers: Optional[int] = None) -> LatentModel:
    if spec.discontinuity is not None:
        raise ArgumentError("spec has a discontinuity; use build_discontinuous_block_model")
    return build_block_model(spec, n_nodes, n_layers)


def build_discontinuous_block_model(spec: BlockModelSpec, n_nodes: int,
                                    n_layers: Optional[int] = None) -> LatentModel:
    if spec.discontinuity is None:
        raise ArgumentError("spec has no discontinuity component")
    return build_block_model(spec, n_nodes, n_layers)


def default_smooth_spec() -> BlockModelSpec:
    """Three dynamic groups (40/40/20 split) and three layers with merged groups.

    ``R_g = 5g``, ``c_{1,g} = c_{2,g} = 2 R_g + 1``, ``theta_g = g pi``; layer 2
    merges groups 1 and 2, layer 3 merges groups 2 and 3.
    """
    g = np.arange(1, 4, dtype=float)
    R = 5.0 * g
    pi = np.pi
    offset = [[1.0, 2.0, 3.0], [2.0, 2.0, 4.0], [3.0, 5.0, 5.0]]
    angle = [[pi, pi / 2, pi / 3], [pi / 2, pi / 2, pi / 3], [pi / 2, pi / 6, pi / 6]]
    return BlockModelSpec(c1=2 * R + 1, c2=2 * R + 1, radius=R, phase=g * pi,
                          offset=offset, angle=angle,
                          dynamic_fractions=[0.4, 0.4, 0.2], layer_fractions=[0.4, 0.4, 0.2])


def default_discontinuous_spec() -> BlockModelSpec:
    spec = default_smooth_spec()
    spec.discontinuity = StepSpec()
    return spec


def constant_model(X, Y, n_layers=1) -> LatentModel:
    """Time-constant model ``X_i(t) = X_i``; handy for tests and sanity checks."""
    X = np.asarray(X, dtype=float)
    return LatentModel(PiecewiseLinearTrajectory(np.stack([X, X])), Y, n_layers)


def build_group_wave_model(n_nodes: int, n_layers: int = 10, n_groups: int = 6, dim: int = 10,
                           seed: int = 0, n_knots: int = 256) -> LatentModel:
    """Random positive group model with smooth periodic trajectories.

    Each dynamic group ``g`` follows ``X_g(t) = b_g + a_g * sin(2 pi f t + phi_g)``
    coordinatewise with ``b > a > 0``; layer positions are positive, one per
    (layer, group).  Nodes are split into contiguous, near-equal groups in
    both roles.  All intensities are positive by construction.
    """
    if n_nodes < n_groups:
        raise ArgumentError("need at least one node per group")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(n_groups, dim)))
    k = np.arange(dim)
    # each group loads on its own coordinate(s); remaining coordinates are shared
    own = (k[None, :] % n_groups == np.arange(n_groups)[:, None]) & (k[None, :] < n_groups)
    base = 0.2 + 3.0 * own + 0.5 * (k[None, :] >= n_groups)
    amp = rng.uniform(0.2, 0.5, (n_groups, dim)) * base
    freq = rng.integers(1, 3, (n_groups, dim))
    phase = rng.uniform(0.0, 2.0 * np.pi, (n_groups, dim))
    t = np.arange(n_knots + 1) / n_knots
    groups = contiguous_groups(n_nodes, np.full(n_groups, 1.0 / n_groups))
    path = base + amp * np.sin(2.0 * np.pi * freq * t[:, None, None] + phase)  # (K+1, G, d)
    shift = (np.arange(n_groups)[None, :, None] + np.arange(n_layers)[:, None, None]) % dim
    gamma = 0.02 + 0.05 * rng.uniform(size=(n_layers, n_groups, dim)) + 1.0 * (k == shift)
    Y = np.concatenate([gamma[l][groups] for l in range(n_layers)])
    return LatentModel(PiecewiseLinearTrajectory(path[:, groups, :]), Y, n_layers, groups=groups,
                       layer_groups=np.tile(groups, (n_layers, 1)))


# ---------------------------------------------------------------------------
# config (TOML-shaped dicts)

_ANGLE = re.compile(r"^\s*([-+]?\d*\.?\d*)\s*\*?\s*pi\s*(?:/\s*(\d+(?:\.\d*)?))?\s*$")


def _angle(value):
    """Parse a number or a string such as ``"pi"``, ``"-pi/6"``, ``"2*pi"``."""
    if isinstance(value, (int, float)):
        return float(value)
    match = _ANGLE.match(str(value))
    if not match:
        raise ConfigError(f"cannot parse angle {value!r}")
    coef, denom = match.groups()
    coef = {"": 1.0, "+": 1.0, "-": -1.0}.get(coef, None) if coef in ("", "+", "-") else float(coef)
    return coef * np.pi / (float(denom) if denom else 1.0)


def _angles(values):
    if isinstance(values, (list, tuple)):
        return [_angles(v) for v in values]
    return _angle(values)


def spec_from_dict(cfg: dict) -> BlockModelSpec:
    """Build a spec from a ``[model]`` table.

    Recognised keys: ``preset`` ("smooth" | "discontinuous"), ``[dynamic]``
    with ``c1, c2, radius, phase, fractions, groups``, ``[layer]`` with
    ``offset, angle, fractions, groups``, and ``[discontinuity]`` with
    ``taus, multipliers``.  Keys given explicitly override the preset.
    Angles accept strings like ``"pi/3"``.
    """
    try:
        preset = cfg.get("preset")
        if preset == "smooth":
            spec = default_smooth_spec()
        elif preset == "discontinuous":
            spec = default_discontinuous_spec()
        elif preset is None:
            spec = None
        else:
            raise ConfigError(f"unknown model preset {preset!r}")
        dyn = cfg.get("dynamic", {})
        lay = cfg.get("layer", {})
        base = spec_to_dict(spec) if spec else {"dynamic": {}, "layer": {}}
        kw = dict(
            c1=dyn.get("c1", base["dynamic"].get("c1")),
            c2=dyn.get("c2", base["dynamic"].get("c2")),
            radius=dyn.get("radius", base["dynamic"].get("radius")),
            phase=_angles(dyn.get("phase", base["dynamic"].get("phase"))),
            offset=lay.get("offset", base["layer"].get("offset")),
            angle=_angles(lay.get("angle", base["layer"].get("angle"))),
            dynamic_fractions=dyn.get("fractions", base["dynamic"].get("fractions")),
            layer_fractions=lay.get("fractions", base["layer"].get("fractions")),
            group_of_node=dyn.get("groups"),
            layer_group_of_node=lay.get("groups"),
        )
        if any(kw[k] is None for k in ("c1", "c2", "radius", "phase", "offset", "angle")):
            raise ConfigError("model config needs c1, c2, radius, phase, offset and angle (or a preset)")
        step = cfg.get("discontinuity", base.get("discontinuity"))
        if step is not None and step is not False:
            kw["discontinuity"] = StepSpec(tuple(step.get("taus", (0.25, 0.5, 0.75))),
                                           tuple(step.get("multipliers", (0.0, 0.4, -0.3, 0.7))))
        return BlockModelSpec(**kw)
    except ArgumentError as exc:
        raise ConfigError(str(exc)) from exc


def spec_to_dict(spec: BlockModelSpec) -> dict:
    out = {
        "dynamic": {
            "c1": spec.c1.tolist(), "c2": spec.c2.tolist(),
            "radius": spec.radius.tolist(), "phase": spec.phase.tolist(),
        },
        "layer": {"offset": spec.offset.tolist(), "angle": spec.angle.tolist()},
    }
    if spec.dynamic_fractions is not None:
        out["dynamic"]["fractions"] = list(map(float, spec.dynamic_fractions))
    if spec.layer_fractions is not None:
        out["layer"]["fractions"] = list(map(float, spec.layer_fractions))
    if spec.group_of_node is not None:
        out["dynamic"]["groups"] = np.asarray(spec.group_of_node).tolist()
    if spec.layer_group_of_node is not None:
        out["layer"]["groups"] = np.asarray(spec.layer_group_of_node).tolist()
    if spec.discontinuity is not None:
        out["discontinuity"] = {"taus": list(spec.discontinuity.taus),
                                "multipliers": list(spec.discontinuity.multipliers)}
    return out
