"""Point sets, kernel PCF estimation and PCF-matching gradient descent.

The estimator is the edge-corrected kernel sum

    G(r) = (V/gamma_W(r)) (V/N) / (S_E(r) (N - 1)) * sum_{i != j} k(r - |x_i - x_j|)

with a unit-mass Gaussian kernel truncated at 4 sigma and ``S_E`` the surface
area of the radius-``r`` sphere. ``gamma_W`` is the isotropic set covariance of
the unit cube, ``E_u prod_p (1 - r |u_p|)_+`` over random unit directions ``u``
(``edge="exact"``), or its linear form ``V - (S_W/pi) r`` (``edge="linear"``),
clamped below at ``0.1 V``. Distances are Euclidean in the unit cube (no
wrap-around).
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import InvalidArgument, NumericalFailure, PartialDesign
from .pcf_models import RadialGrid, RadialProfile

__all__ = [
    "PointSet",
    "EstimatorConfig",
    "Schedule",
    "SynthesisConfig",
    "SynthesisTrace",
    "set_covariance",
    "estimator_weights",
    "estimate_pcf",
    "objective",
    "pcf_gradient",
    "learning_rate",
    "default_step_unit",
    "synthesize",
    "dart_throwing",
    "min_pairwise_distance",
]

_TRUNC = 4.0
_GAMMA_FLOOR = 0.1
_REFRESH_EVERY = 50


def _fmt(value):
    if isinstance(value, float):
        return repr(float(value))
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    return str(value)


@dataclass(eq=False)
class PointSet:
    """``n`` points in the unit cube ``[0, 1]^d`` plus provenance metadata."""

    coords: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        coords = np.ascontiguousarray(self.coords, dtype=float)
        if coords.ndim != 2:
            raise InvalidArgument("coords must be an (n, d) array")
        if coords.size and (coords.min() < 0 or coords.max() > 1):
            raise InvalidArgument("coordinates must lie in [0, 1]")
        self.coords = coords

    @property
    def n(self):
        return self.coords.shape[0]

    @property
    def d(self):
        return self.coords.shape[1]

    def to_csv(self, path=None):
        text = "".join(",".join(repr(float(v)) for v in row) + "\n" for row in self.coords)
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def sidecar_text(self):
        lines = [f"n = {self.n}", f"d = {self.d}"]
        lines += [f"{k} = {_fmt(v)}" for k, v in self.meta.items() if k not in ("n", "d")]
        return "\n".join(lines) + "\n"

    def save(self, path, sidecar=None):
        """Write the CSV and a ``key = value`` sidecar next to it."""
        self.to_csv(path)
        sidecar = sidecar or str(path) + ".meta"
        with open(sidecar, "w", newline="") as fh:
            fh.write(self.sidecar_text())
        return sidecar

    @classmethod
    def from_csv(cls, path, d=None):
        data = np.loadtxt(path, delimiter=",", ndmin=2)
        if d is not None and data.size == 0:
            data = data.reshape(0, d)
        return cls(data)


@dataclass(frozen=True)
class EstimatorConfig:
    sigma: float
    d: int
    v_w: float = 1.0
    s_w: float | None = None
    edge: str = "exact"

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidArgument(f"sigma must be positive, got {self.sigma}")
        if self.edge not in ("exact", "linear"):
            raise InvalidArgument(f"edge must be 'exact' or 'linear', got {self.edge!r}")
        if self.edge == "exact" and self.v_w != 1.0:
            raise InvalidArgument("the exact edge correction assumes the unit cube")
        if self.s_w is None:
            object.__setattr__(self, "s_w", 2.0 * self.d)

    @classmethod
    def for_grid(cls, grid, d, scale=1.0, edge="exact"):
        return cls(scale * grid.spacing, d, edge=edge)


class Schedule(str, enum.Enum):
    ALR = "alr"
    CLR = "clr"


@dataclass(frozen=True)
class SynthesisConfig:
    t_max: int = 1000
    schedule: Schedule = Schedule.ALR
    clr_rate: float = 0.01
    seed: int = 0
    grid: RadialGrid | None = None
    estimator: EstimatorConfig | None = None
    weights: np.ndarray | None = None
    step_unit: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "schedule", Schedule(str(self.schedule).lower()
                                                      if not isinstance(self.schedule, Schedule)
                                                      else self.schedule))
        if int(self.t_max) != self.t_max or self.t_max < 1:
            raise InvalidArgument(f"t_max must be >= 1, got {self.t_max}")
        if self.step_unit is not None and not self.step_unit > 0:
            raise InvalidArgument("step_unit must be positive")
        if self.schedule is Schedule.CLR and not self.clr_rate > 0:
            raise InvalidArgument("clr_rate must be positive for the CLR schedule")


@dataclass
class SynthesisTrace:
    """Objective after each iteration, plus the part from ``G* = 0`` bins."""

    objective: np.ndarray
    coverage: np.ndarray

    def __len__(self):
        return len(self.objective)

    def to_csv(self, path=None):
        text = "iter,objective,coverage\n" + "".join(
            f"{t + 1},{o!r},{c!r}\n"
            for t, (o, c) in enumerate(zip(self.objective.tolist(), self.coverage.tolist()))
        )
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _sphere_area(r, d):
    return 2.0 * math.pi ** (d / 2) * r ** (d - 1) / math.gamma(d / 2)


@functools.lru_cache(maxsize=32)
def _cube_covariance(d, r_cut, m, directions=100_000):
    u = np.random.default_rng(12345).standard_normal((directions, d))
    u = np.abs(u) / np.linalg.norm(u, axis=1, keepdims=True)
    r = RadialGrid(r_cut, m).points
    out = np.empty(m)
    for j, rj in enumerate(r):
        out[j] = np.mean(np.prod(np.clip(1.0 - rj * u, 0.0, None), axis=1))
    out.flags.writeable = False
    return out


def set_covariance(grid, cfg):
    """``gamma_W`` on ``grid`` before clamping."""
    if cfg.edge == "exact":
        return np.array(_cube_covariance(cfg.d, grid.r_cut, grid.m))
    return cfg.v_w - cfg.s_w / math.pi * grid.points


def estimator_weights(grid, n, cfg):
    """Per-bin factor ``c_j`` with ``G_j = c_j * sum_{i != l} k(r_j - d_il)``.

    Returns ``(c, clamped)`` where ``clamped`` marks bins whose edge
    correction hit the floor.
    """
    r = grid.points
    gamma = set_covariance(grid, cfg)
    floor = _GAMMA_FLOOR * cfg.v_w
    clamped = gamma < floor
    gamma = np.maximum(gamma, floor)
    area = _sphere_area(r, cfg.d)
    c = (cfg.v_w / gamma) * (cfg.v_w / n) / (area * (n - 1))
    return c, clamped


@numba.njit(cache=True)
def _accumulate(x, i, skip, r0, h, m, sigma, scale, acc):
    """Add ``scale * k(r_j - |x_i - x_l|)`` to ``acc`` for all ``l`` not in (i, skip)."""
    n, d = x.shape
    reach = _TRUNC * sigma
    norm = 1.0 / (math.sqrt(2.0 * math.pi) * sigma)
    inv = 0.5 / (sigma * sigma)
    r_hi = r0 + (m - 1) * h + reach
    for l in range(n):
        if l == i or l == skip:
            continue
        s = 0.0
        for p in range(d):
            t = x[i, p] - x[l, p]
            s += t * t
        dist = math.sqrt(s)
        if dist > r_hi:
            continue
        lo = int(math.ceil((dist - reach - r0) / h))
        hi = int(math.floor((dist + reach - r0) / h))
        if lo < 0:
            lo = 0
        if hi > m - 1:
            hi = m - 1
        for j in range(lo, hi + 1):
            z = r0 + j * h - dist
            if abs(z) <= reach:
                acc[j] += scale * norm * math.exp(-z * z * inv)


@numba.njit(cache=True)
def _raw_sums(x, r0, h, m, sigma):
    n = x.shape[0]
    acc = np.zeros(m)
    # each unordered pair once, counted twice
    for i in range(n):
        _accumulate(x[: i + 1], i, -1, r0, h, m, sigma, 2.0, acc)
    return acc


@numba.njit(cache=True)
def _gradient(x, i, r0, h, m, sigma, coef, out):
    """Gradient of sum_j w_j (c_j S_j - G*_j)^2 w.r.t. x_i, given coef_j = 4 w_j c_j res_j."""
    n, d = x.shape
    reach = _TRUNC * sigma
    norm = 1.0 / (math.sqrt(2.0 * math.pi) * sigma)
    inv = 0.5 / (sigma * sigma)
    r_hi = r0 + (m - 1) * h + reach
    for p in range(d):
        out[p] = 0.0
    for l in range(n):
        if l == i:
            continue
        s = 0.0
        for p in range(d):
            t = x[i, p] - x[l, p]
            s += t * t
        dist = math.sqrt(s)
        if dist > r_hi or dist == 0.0:
            continue
        lo = int(math.ceil((dist - reach - r0) / h))
        hi = int(math.floor((dist + reach - r0) / h))
        if lo < 0:
            lo = 0
        if hi > m - 1:
            hi = m - 1
        w = 0.0
        for j in range(lo, hi + 1):
            z = r0 + j * h - dist
            if abs(z) <= reach:
                # d/d(dist) of k(r_j - dist) = k * z / sigma^2
                w += coef[j] * norm * math.exp(-z * z * inv) * z / (sigma * sigma)
        if w != 0.0:
            for p in range(d):
                out[p] += w * (x[i, p] - x[l, p]) / dist


@numba.njit(cache=True)
def _descend(x, target, c, wts, r0, h, m, sigma, rates, refresh, zero_mask, obj, cov):
    n, d = x.shape
    sums = _raw_sums(x, r0, h, m, sigma)
    grad = np.zeros(d)
    coef = np.zeros(m)
    old = np.zeros(d)
    for t in range(rates.shape[0]):
        lam = rates[t]
        for i in range(n):
            for j in range(m):
                coef[j] = 4.0 * wts[j] * c[j] * (c[j] * sums[j] - target[j])
            _gradient(x, i, r0, h, m, sigma, coef, grad)
            g2 = 0.0
            for p in range(d):
                g2 += grad[p] * grad[p]
            if g2 == 0.0 or not math.isfinite(g2):
                continue
            gn = math.sqrt(g2)
            _accumulate(x, i, -1, r0, h, m, sigma, -2.0, sums)
            for p in range(d):
                old[p] = x[i, p]
                v = x[i, p] - lam * grad[p] / gn
                x[i, p] = min(max(v, 0.0), 1.0)
            _accumulate(x, i, -1, r0, h, m, sigma, 2.0, sums)
        if (t + 1) % refresh == 0:
            sums = _raw_sums(x, r0, h, m, sigma)
        o = 0.0
        cv = 0.0
        for j in range(m):
            e = c[j] * sums[j] - target[j]
            o += wts[j] * e * e
            if zero_mask[j]:
                cv += wts[j] * e * e
        obj[t] = o
        cov[t] = cv


def _coords(points):
    return points.coords if isinstance(points, PointSet) else np.ascontiguousarray(points, dtype=float)


def estimate_pcf(points, grid, cfg):
    """Kernel estimate of the PCF of ``points`` on ``grid``."""
    x = _coords(points)
    n = x.shape[0]
    if n < 2:
        raise InvalidArgument("estimate_pcf needs at least two points")
    c, clamped = estimator_weights(grid, n, cfg)
    r = grid.points
    sums = _raw_sums(x, r[0], grid.spacing, grid.m, cfg.sigma)
    meta = {"sigma": cfg.sigma, "clamped": np.flatnonzero(clamped).tolist()}
    return RadialProfile(grid, c * sums, meta=meta)


def _weights(cfg, m):
    if cfg is None or cfg.weights is None:
        return np.ones(m)
    w = np.asarray(cfg.weights, dtype=float)
    if w.shape != (m,):
        raise InvalidArgument("weights must have one entry per grid point")
    return w


def objective(points, target, cfg, weights=None):
    est = estimate_pcf(points, target.grid, cfg)
    w = np.ones(target.grid.m) if weights is None else np.asarray(weights, dtype=float)
    return float(np.sum(w * (est.values - target.values) ** 2))


def pcf_gradient(points, i, target, grid, cfg, weights=None):
    """Analytic gradient of the matching objective with respect to point ``i``.

    Pairs at zero distance contribute nothing (their direction is undefined).
    """
    x = _coords(points)
    n = x.shape[0]
    if n < 2:
        raise InvalidArgument("pcf_gradient needs at least two points")
    if not 0 <= i < n:
        raise InvalidArgument(f"index {i} out of range for {n} points")
    if target.grid != grid:
        raise InvalidArgument("target profile must live on the given grid")
    c, _ = estimator_weights(grid, n, cfg)
    w = np.ones(grid.m) if weights is None else np.asarray(weights, dtype=float)
    sums = _raw_sums(x, grid.points[0], grid.spacing, grid.m, cfg.sigma)
    coef = 4.0 * w * c * (c * sums - target.values)
    out = np.zeros(x.shape[1])
    _gradient(x, i, grid.points[0], grid.spacing, grid.m, cfg.sigma, coef, out)
    return tuple(out.tolist())


def default_step_unit(spec):
    """Length unit of the step schedule: the unit cube, or ``5 rbar`` when smaller."""
    rbar = (math.gamma(spec.d / 2 + 1) / (math.pi ** (spec.d / 2) * spec.n)) ** (1.0 / spec.d)
    return min(1.0, 5.0 * rbar)


def learning_rate(t, schedule=Schedule.ALR, clr_rate=0.01):
    """Step length at iteration ``t`` (1-based)."""
    if Schedule(schedule) is Schedule.CLR:
        return clr_rate
    return 0.1 * math.exp(-0.1 * math.sqrt(t))


def synthesize(target, spec, cfg=None):
    """Move seeded uniform points so their estimated PCF matches ``target``.

    Parameters
    ----------
    target : RadialProfile
        Non-negative target PCF; its grid is used by the estimator.
    spec : DesignSpec
    cfg : SynthesisConfig, optional

    Returns
    -------
    (PointSet, SynthesisTrace)
    """
    cfg = cfg or SynthesisConfig()
    if not target.is_nonnegative():
        raise InvalidArgument("target PCF must be non-negative")
    grid = cfg.grid or target.grid
    if grid != target.grid:
        raise InvalidArgument("cfg.grid must match the target's grid")
    est = cfg.estimator or EstimatorConfig.for_grid(grid, spec.d)
    if est.d != spec.d:
        raise InvalidArgument("estimator dimension differs from the design dimension")
    rng = np.random.default_rng(cfg.seed)
    x = rng.random((spec.n, spec.d))
    c, _ = estimator_weights(grid, spec.n, est)
    unit = cfg.step_unit if cfg.step_unit is not None else default_step_unit(spec)
    rates = unit * np.array(
        [learning_rate(t, cfg.schedule, cfg.clr_rate) for t in range(1, cfg.t_max + 1)]
    )
    obj = np.zeros(cfg.t_max)
    cov = np.zeros(cfg.t_max)
    zero_mask = target.values == 0
    _descend(x, target.values, c, _weights(cfg, grid.m), grid.points[0], grid.spacing,
             grid.m, est.sigma, rates, _REFRESH_EVERY, zero_mask, obj, cov)
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(obj)):
        raise NumericalFailure("synthesis produced non-finite values")
    meta = {
        "method": "synthesis",
        "schedule": cfg.schedule.value,
        "seed": cfg.seed,
        "t_max": cfg.t_max,
        "step_unit": unit,
        "final_objective": float(obj[-1]),
    }
    if target.params is not None:
        p = target.params
        meta["params"] = [p.family.value, p.r_min, p.r_1, p.p0, p.a, p.b, p.c, p.d_phase]
    points = PointSet(x, meta)
    points.meta["min_distance"] = min_pairwise_distance(points)
    return points, SynthesisTrace(obj, cov)


@numba.njit(cache=True)
def _min_dist2(x):
    n, d = x.shape
    best = np.inf
    for i in range(n):
        for j in range(i + 1, n):
            s = 0.0
            for p in range(d):
                t = x[i, p] - x[j, p]
                s += t * t
            if s < best:
                best = s
    return best


def min_pairwise_distance(points):
    x = _coords(points)
    if x.shape[0] < 2:
        raise InvalidArgument("need at least two points")
    return math.sqrt(_min_dist2(x))


@numba.njit(cache=True)
def _darts(cand, accepted, count, n, r2, max_failures, failures):
    d = cand.shape[1]
    for c in range(cand.shape[0]):
        ok = True
        for a in range(count):
            s = 0.0
            for p in range(d):
                t = cand[c, p] - accepted[a, p]
                s += t * t
            if s < r2:
                ok = False
                break
        if ok:
            for p in range(d):
                accepted[count, p] = cand[c, p]
            count += 1
            failures = 0
            if count == n:
                break
        else:
            failures += 1
            if failures >= max_failures:
                break
    return count, failures


def dart_throwing(r_min, spec, max_failures=100_000, seed=0, batch=4096):
    """Rejection sampling with minimum distance ``r_min``.

    Raises
    ------
    PartialDesign
        After ``max_failures`` consecutive rejections; ``achieved`` is the
        number of points placed.
    """
    if r_min < 0:
        raise InvalidArgument("r_min must be >= 0")
    rng = np.random.default_rng(seed)
    accepted = np.zeros((spec.n, spec.d))
    count, failures = 0, 0
    while count < spec.n and failures < max_failures:
        cand = rng.random((batch, spec.d))
        count, failures = _darts(cand, accepted, count, spec.n, r_min * r_min,
                                 max_failures, failures)
    if count < spec.n:
        raise PartialDesign(
            f"placed {count} of {spec.n} points before {max_failures} consecutive rejections",
            count,
        )
    meta = {"method": "pds-dart", "seed": seed, "r_min": float(r_min)}
    points = PointSet(accepted, meta)
    if spec.n >= 2:
        points.meta["min_distance"] = min_pairwise_distance(points)
    return points
