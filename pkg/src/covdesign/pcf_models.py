"""Radial grids and the three pair correlation function (PCF) families.

All profiles live on a unit-volume domain. Three families are provided:

* ``PDS``: a step, zero below the disk radius and one from it onwards.
* ``SFSD``: a stair with a peak of height ``p0`` on ``(r_min, r_1]``.
* ``PROPOSED``: the stair followed by a damped oscillating tail,
  ``1 + (a / r) exp(-b r) sin(2 pi c r + d_phase)`` for ``r > r_1``.

The unit step used by the stair families is ``f(x) = 0`` for ``x <= 0`` and
``1`` for ``x > 0``, so ``G(r_min) = 0`` for SFSD/PROPOSED while the PDS step
gives ``G(r_min) = 1``. Both conventions are kept as written.
"""
from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidArgument

__all__ = [
    "Family",
    "RadialGrid",
    "PcfParams",
    "RadialProfile",
    "DEFAULT_OSCILLATION",
    "DEFAULT_GRID_POINTS",
    "make_radial_grid",
    "pcf_pds",
    "pcf_sfsd",
    "pcf_proposed",
    "target_profile",
    "evaluate_pcf",
]

#: (a, b, c, d_phase) used when the tail is not searched.
DEFAULT_OSCILLATION = (0.5, 4.0, 300.0, 0.0)
DEFAULT_GRID_POINTS = 200


class Family(str, enum.Enum):
    PDS = "pds"
    SFSD = "sfsd"
    PROPOSED = "proposed"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidArgument(f"unknown family {value!r}") from None


@dataclass(frozen=True)
class RadialGrid:
    """Midpoint grid ``r_j = (j - 0.5) r_cut / m`` for ``j = 1..m``."""

    r_cut: float
    m: int

    def __post_init__(self):
        if not (self.r_cut > 0) or not math.isfinite(self.r_cut):
            raise InvalidArgument(f"r_cut must be positive, got {self.r_cut}")
        if int(self.m) != self.m or self.m < 1:
            raise InvalidArgument(f"m must be a positive integer, got {self.m}")

    @property
    def spacing(self):
        return self.r_cut / self.m

    @property
    def points(self):
        return (np.arange(self.m) + 0.5) * self.spacing


def make_radial_grid(r_cut, m):
    return RadialGrid(float(r_cut), int(m))


@dataclass(frozen=True)
class PcfParams:
    """Parameters of one member of a PCF family.

    ``r_1`` and ``p0`` are ignored for PDS; ``a``, ``b``, ``c`` and
    ``d_phase`` only matter for PROPOSED. Lengths are in unit-domain
    lengths and ``c`` is in cycles per unit length.
    """

    family: Family
    r_min: float
    r_1: float | None = None
    p0: float = 1.0
    a: float = DEFAULT_OSCILLATION[0]
    b: float = DEFAULT_OSCILLATION[1]
    c: float = DEFAULT_OSCILLATION[2]
    d_phase: float = DEFAULT_OSCILLATION[3]

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        if self.r_1 is None:
            object.__setattr__(self, "r_1", self.r_min)
        self.validate()

    def validate(self):
        if not (self.r_min > 0) or not math.isfinite(self.r_min):
            raise InvalidArgument(f"r_min must be positive, got {self.r_min}")
        if self.family is Family.PDS:
            return
        if not self.r_1 >= self.r_min:
            raise InvalidArgument(f"r_1={self.r_1} must be >= r_min={self.r_min}")
        if not self.p0 >= 1:
            raise InvalidArgument(f"p0 must be >= 1, got {self.p0}")
        if self.family is Family.PROPOSED:
            if not self.a >= 0:
                raise InvalidArgument(f"a must be >= 0, got {self.a}")
            if not self.b >= 0:
                raise InvalidArgument(f"b must be >= 0, got {self.b}")

    @property
    def peak_width(self):
        return self.r_1 - self.r_min

    def with_radii(self, r_min, r_1=None):
        return replace(self, r_min=r_min, r_1=r_min if r_1 is None else r_1)

    def breakpoints(self):
        """Radii where the closed form is discontinuous."""
        if self.family is Family.PDS or self.r_1 == self.r_min:
            return (self.r_min,)
        return (self.r_min, self.r_1)

    def tail_extent(self, tol=1e-6):
        """Radius beyond which the tail envelope ``(a/r) exp(-b r)`` is below ``tol``.

        Returns ``r_1`` (or ``r_min``) when the family has no oscillating tail.
        """
        start = self.r_1 if self.family is not Family.PDS else self.r_min
        if self.family is not Family.PROPOSED or self.a == 0:
            return start
        env = lambda r: self.a / r * math.exp(-self.b * r)
        if env(start) < tol:
            return start
        if self.b == 0:
            return self.a / tol
        hi = max(start, 1.0 / self.b)
        while env(hi) >= tol:
            hi *= 2.0
        lo = start
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if env(mid) >= tol:
                lo = mid
            else:
                hi = mid
        return hi


def evaluate_pcf(params, r):
    """Closed-form ``G(r)`` for ``params``, vectorized over ``r``."""
    r = np.asarray(r, dtype=float)
    if params.family is Family.PDS:
        return np.where(r >= params.r_min, 1.0, 0.0)
    g = np.where(r > params.r_min, params.p0, 0.0)
    tail = r > params.r_1
    if params.family is Family.SFSD or params.a == 0:
        return np.where(tail, 1.0, g)
    rt = np.where(tail, r, 1.0)
    osc = 1.0 + params.a / rt * np.exp(-params.b * rt) * np.sin(
        2 * np.pi * params.c * rt + params.d_phase
    )
    return np.where(tail, osc, g)


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Values of ``G`` on a radial grid.

    When ``params`` (or an explicit ``func``) is set the profile has a closed
    form, and calling the profile evaluates it exactly; ``breaks`` then lists
    its discontinuities. Otherwise the tabulated values are linearly
    interpolated (constant beyond the ends).
    """

    grid: RadialGrid
    values: np.ndarray
    params: PcfParams | None = None
    func: object = None
    breaks: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.m,):
            raise InvalidArgument(
                f"profile has {values.shape} values for a grid of {self.grid.m}"
            )
        object.__setattr__(self, "values", values)
        if self.params is not None and not self.breaks:
            object.__setattr__(self, "breaks", self.params.breakpoints())

    @property
    def has_closed_form(self):
        return self.func is not None or self.params is not None

    @property
    def r(self):
        return self.grid.points

    def __call__(self, r):
        if self.func is not None:
            return np.asarray(self.func(np.asarray(r, dtype=float)), dtype=float)
        if self.params is not None:
            return evaluate_pcf(self.params, r)
        return np.interp(r, self.grid.points, self.values)

    def is_nonnegative(self, tol=0.0):
        return bool(np.all(self.values >= -tol))

    def to_csv(self, path=None):
        buf = io.StringIO()
        buf.write("r,G\n")
        for r, g in zip(self.grid.points.tolist(), self.values.tolist()):
            buf.write(f"{r!r},{g!r}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        r, g = data[:, 0], data[:, 1]
        m = len(r)
        grid = RadialGrid(float(r[-1] + r[0]), m)
        if not np.allclose(grid.points, r, rtol=1e-9, atol=0):
            raise InvalidArgument(f"{path}: radii are not a midpoint grid")
        return cls(grid, g)


def pcf_pds(r_min, grid):
    params = PcfParams(Family.PDS, r_min)
    return RadialProfile(grid, evaluate_pcf(params, grid.points), params)


def _check_family(params, family):
    if params.family is not family:
        raise InvalidArgument(f"expected {family.value} params, got {params.family.value}")


def pcf_sfsd(params, grid):
    _check_family(params, Family.SFSD)
    return RadialProfile(grid, evaluate_pcf(params, grid.points), params)


def pcf_proposed(params, grid):
    _check_family(params, Family.PROPOSED)
    values = evaluate_pcf(params, grid.points)
    if np.any(values < 0):
        j = int(np.argmin(values))
        raise InvalidArgument(
            f"proposed PCF is negative ({values[j]:.4g}) at r={grid.points[j]:.4g}"
        )
    return RadialProfile(grid, values, params)


def target_profile(params, grid):
    """Dispatch to the family's constructor."""
    if params.family is Family.PDS:
        return pcf_pds(params.r_min, grid)
    if params.family is Family.SFSD:
        return pcf_sfsd(params, grid)
    return pcf_proposed(params, grid)
