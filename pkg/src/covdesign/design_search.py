"""Coverage metrics and realizable-parameter search for the PCF families.

The search maximizes the coverage radius ``r_min`` subject to the implied
spectrum being non-negative on the spectral grid. For the stair families
the free parameters are the peak height ``p0`` (brute-forced over a grid)
and the peak end ``r_1`` (gradient-driven, kept in ``[r_min, 2 r_min]``).

:func:`optimize_parameters` keeps ``r_min`` on the feasibility boundary for
the current peak ratio ``q = r_1 / r_min`` and moves ``q`` along the
boundary slope ``d r_min / d q = -(dP/dq) / (dP/dr_min)`` evaluated at the
active frequency ``k* = argmin P(k)``, with backtracking so that every
accepted step enlarges ``r_min``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from .errors import InfeasibleDesign, InvalidArgument
from .pcf_models import (
    DEFAULT_GRID_POINTS,
    Family,
    PcfParams,
    RadialGrid,
    evaluate_pcf,
    RadialProfile,
    target_profile,
)
from .spectral import (
    REALIZABILITY_TOL,
    RealizabilityReport,
    SpectralGrid,
    check_realizability,
    psd_at,
)

__all__ = [
    "DesignSpec",
    "PackingTable",
    "CoverageReport",
    "OptimizeResult",
    "PACKING_DENSITY",
    "DEFAULT_P0_GRID",
    "DEFAULT_TAIL",
    "reference_radius",
    "max_radius",
    "relative_radius",
    "default_radial_grid",
    "default_spectral_grid",
    "scaled_oscillation",
    "min_power",
    "feasibility_boundary",
    "optimize_parameters",
    "search_design",
]

#: Densest known packing fractions (hexagonal, FCC, D4, D5, E6, E7, E8).
PACKING_DENSITY = {
    2: math.pi / (2 * math.sqrt(3)),
    3: math.pi / (3 * math.sqrt(2)),
    4: math.pi**2 / 16,
    5: math.pi**2 * math.sqrt(2) / 30,
    6: math.pi**3 * math.sqrt(3) / 144,
    7: math.pi**3 / 105,
    8: math.pi**4 / 384,
}

DEFAULT_P0_GRID = tuple(round(1.0 + 0.05 * i, 2) for i in range(31))

#: Tail shape in units of the reference radius: (amplitude * rbar,
#: decay / rbar, cycles / rbar, phase). See :func:`scaled_oscillation`.
DEFAULT_TAIL = (0.3, 1.0, 0.6, math.pi / 2)

# candidate tails tried by the proposed-family search, same units
_TAIL_ALPHA = (0.1, 0.3)
_TAIL_BETA = (1.0,)
_TAIL_KAPPA = (0.6, 0.8, 1.0)
_TAIL_PHASE = (-math.pi / 2, 0.0, math.pi / 2, math.pi)

# raw-unit sweep used by the exhaustive mode
_RAW_A = (0.1, 0.5, 0.9)
_RAW_B = (2.0, 4.0, 6.0)
_RAW_C = (50.0, 325.0, 600.0)
_RAW_D = (-math.pi / 2, 0.0, math.pi / 2, math.pi)

_MAX_HALVINGS = 20
_Q_MAX = 2.0


@dataclass(frozen=True)
class DesignSpec:
    n: int
    d: int
    v: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise InvalidArgument(f"n must be an integer >= 2, got {self.n}")
        if int(self.d) != self.d or not 2 <= self.d <= 8:
            raise InvalidArgument(f"d must be in 2..8, got {self.d}")
        if self.v != 1.0:
            raise InvalidArgument("only unit-volume domains are supported")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "d", int(self.d))


@dataclass(frozen=True)
class PackingTable:
    gamma: dict = field(default_factory=lambda: dict(PACKING_DENSITY))

    def __post_init__(self):
        for d, g in self.gamma.items():
            if not 0 < g <= 1:
                raise InvalidArgument(f"packing density for d={d} must be in (0, 1]")

    def __getitem__(self, d):
        try:
            return self.gamma[d]
        except KeyError:
            raise InvalidArgument(f"no packing density for d={d}") from None


def _ball_scale(spec):
    return spec.v * math.gamma(spec.d / 2 + 1) / (math.pi ** (spec.d / 2) * spec.n)


def reference_radius(spec):
    """Radius at which ``n`` balls of that radius fill the domain volume."""
    return _ball_scale(spec) ** (1.0 / spec.d)


def max_radius(spec, table=None):
    table = table or PackingTable()
    return (table[spec.d] * _ball_scale(spec)) ** (1.0 / spec.d)


def relative_radius(r_min, spec, table=None):
    if r_min < 0:
        raise InvalidArgument("r_min must be >= 0")
    return r_min / max_radius(spec, table)


def default_radial_grid(spec, m=DEFAULT_GRID_POINTS):
    return RadialGrid(3.0 * reference_radius(spec), m)


def default_spectral_grid(spec, m_k=1000):
    return SpectralGrid(1.0, 10.0 / reference_radius(spec), m_k)


def scaled_oscillation(spec, alpha, beta, kappa, phase):
    """Tail parameters ``(a, b, c, d_phase)`` from reference-radius units.

    ``a = alpha * rbar`` so that ``a / r`` is about ``alpha`` near the disk
    radius, ``b = beta / rbar`` and ``c = kappa / rbar``.
    """
    rbar = reference_radius(spec)
    return (alpha * rbar, beta / rbar, kappa / rbar, phase)


class OptimizeResult(NamedTuple):
    r_min: float
    r_1: float
    report: RealizabilityReport
    iterations: int = 0


class _Problem:
    """Spectrum evaluations for one (spec, family, p0, tail) combination."""

    def __init__(self, spec, family, p0, oscillation, k_grid, tol):
        self.spec = spec
        self.family = Family.parse(family)
        self.p0 = float(p0)
        self.osc = tuple(oscillation) if oscillation is not None else (0.0, 0.0, 0.0, 0.0)
        self.k_grid = k_grid or default_spectral_grid(spec)
        self.ks = self.k_grid.points
        self.tol = tol
        self.rbar = reference_radius(spec)
        self.grid = default_radial_grid(spec)
        self.evaluations = 0

    def params(self, r_min, r_1):
        if self.family is Family.PDS:
            return PcfParams(Family.PDS, r_min)
        a, b, c, ph = self.osc
        return PcfParams(self.family, r_min, max(r_1, r_min), self.p0, a, b, c, ph)

    def nonnegative(self, prm):
        if prm.family is not Family.PROPOSED or prm.a == 0:
            return True
        r = np.linspace(prm.r_1, max(prm.tail_extent(), prm.r_1 * 1.000001), 4001)[1:]
        return bool(np.all(evaluate_pcf(prm, r) >= 0))

    def spectrum(self, r_min, r_1, ks=None):
        prm = self.params(r_min, r_1)
        if ks is None:
            self.evaluations += 1
        prof = RadialProfile(self.grid, evaluate_pcf(prm, self.grid.points), prm)
        return psd_at(prof, self.spec.n, self.spec.d, self.ks if ks is None else ks)

    def slack(self, r_min, q):
        """``min_k P + tol``; negative when infeasible (or when G < 0)."""
        if not self.nonnegative(self.params(r_min, q * r_min)):
            return -1.0
        return float(self.spectrum(r_min, q * r_min).min()) + self.tol

    def report(self, r_min, r_1):
        p = self.spectrum(r_min, r_1)
        j = int(np.argmin(p))
        return RealizabilityReport(bool(p[j] >= -self.tol), float(p[j]), float(self.ks[j]))

    def boundary(self, q, guess):
        """Largest feasible ``r_min`` reached by walking up from ``guess``."""
        lo = guess
        for _ in range(_MAX_HALVINGS * 4):
            if self.slack(lo, q) >= 0:
                break
            lo *= 0.8
        else:
            return None
        hi = lo * 1.05
        while self.slack(hi, q) >= 0:
            lo, hi = hi, hi * 1.05
        r = brentq(lambda x: self.slack(x, q), lo, hi, xtol=1e-6 * self.rbar)
        while self.slack(r, q) < 0:
            r -= 1e-6 * self.rbar
        return r

    def gradients(self, r_min, q):
        """``(dP*/dr_min at fixed q, dP*/dq at fixed r_min)`` by central differences."""
        p = self.spectrum(r_min, q * r_min)
        k = self.ks[int(np.argmin(p))]
        h = 1e-4 * self.rbar
        f = lambda r, r1: float(self.spectrum(r, r1, [k])[0])
        d_r = (f(r_min + h, q * (r_min + h)) - f(r_min - h, q * (r_min - h))) / (2 * h)
        lo = max(q * r_min - h, r_min)
        hi = q * r_min + h
        d_q = r_min * (f(r_min, hi) - f(r_min, lo)) / (hi - lo)
        return d_r, d_q


def min_power(params, spec, k_grid=None):
    """Minimum of the implied spectrum for ``params`` on ``k_grid``."""
    grid = default_radial_grid(spec)
    k_grid = k_grid or default_spectral_grid(spec)
    prof = target_profile(params, grid)
    return check_realizability(prof, spec.n, spec.d, k_grid).min_power


def feasibility_boundary(spec, family, p0=1.0, ratio=1.0, oscillation=None,
                         k_grid=None, tol=REALIZABILITY_TOL):
    """Largest realizable ``r_min`` at a fixed ``r_1 / r_min`` ratio."""
    prob = _Problem(spec, family, p0, oscillation, k_grid, tol)
    r = prob.boundary(ratio, prob.rbar)
    if r is None:
        raise InfeasibleDesign(f"no realizable r_min for {spec} at ratio {ratio}")
    return r


def optimize_parameters(spec, p0, step=1.0, max_iters=100, *, family=Family.SFSD,
                        oscillation=None, ratio=2.0, r_guess=None, k_grid=None,
                        tol=REALIZABILITY_TOL):
    """Find the largest realizable ``r_min`` for a fixed peak height ``p0``.

    Parameters
    ----------
    spec : DesignSpec
    p0 : float
        Peak height, ``>= 1``.
    step : float
        Dimensionless step on the peak ratio; ``0`` returns the initial point.
    max_iters : int
        Maximum number of ratio updates.
    family : Family
        ``SFSD`` or ``PROPOSED`` (``PDS`` ignores ``p0`` and the ratio).
    oscillation : tuple, optional
        Raw ``(a, b, c, d_phase)`` tail parameters for ``PROPOSED``.
    ratio : float
        Starting ``r_1 / r_min``.

    Returns
    -------
    OptimizeResult
        ``(r_min, r_1, report, iterations)`` with ``report.feasible`` true.

    Notes
    -----
    The start is ``r_min = rbar`` (halved up to 20 times until realizable)
    with ``r_1 = ratio * r_min``. Each iteration first moves ``r_min`` onto
    the feasibility boundary, then updates the ratio along the boundary
    slope; a step that does not enlarge ``r_min`` is halved, and the loop
    ends when no halving helps.
    """
    if p0 < 1:
        raise InvalidArgument(f"p0 must be >= 1, got {p0}")
    if step < 0:
        raise InvalidArgument("step must be >= 0")
    prob = _Problem(spec, family, p0, oscillation, k_grid, tol)
    if prob.family is Family.PDS:
        ratio = 1.0
    q = min(max(float(ratio), 1.0), _Q_MAX)
    r = prob.rbar if r_guess is None else float(r_guess)
    for _ in range(_MAX_HALVINGS + 1):
        if prob.slack(r, q) >= 0:
            break
        r *= 0.5
    else:
        raise InfeasibleDesign(f"no realizable starting radius for {spec}, p0={p0}")
    if step == 0 or max_iters == 0:
        return OptimizeResult(r, q * r, prob.report(r, q * r), 0)

    r = prob.boundary(q, r)
    it = 0
    if prob.family is not Family.PDS:
        for it in range(1, max_iters + 1):
            d_r, d_q = prob.gradients(r, q)
            slope = -d_q / d_r if d_r < 0 else 0.0
            dq = step * slope / r
            accepted = False
            for _ in range(6):
                q_new = min(max(q + dq, 1.0), _Q_MAX)
                if abs(q_new - q) < 1e-4:
                    break
                r_new = prob.boundary(q_new, r)
                if r_new is not None and r_new > r:
                    accepted = True
                    break
                dq *= 0.5
            if not accepted:
                break
            q, r = q_new, r_new
    return OptimizeResult(r, q * r, prob.report(r, q * r), it)


@dataclass(frozen=True)
class CoverageReport:
    params: PcfParams
    rho: float
    feasible: bool
    min_power: float
    n: int
    d: int
    argmin_k: float = float("nan")

    _FLOATS = ("r_min", "r_1", "p0", "a", "b", "c", "d_phase")

    def to_text(self):
        p = self.params
        lines = [
            f"family = {p.family.value}",
            f"n = {self.n}",
            f"d = {self.d}",
        ]
        lines += [f"{name} = {float(getattr(p, name))!r}" for name in self._FLOATS]
        lines += [
            f"rho = {float(self.rho)!r}",
            f"feasible = {str(self.feasible).lower()}",
            f"min_power = {float(self.min_power)!r}",
            f"argmin_k = {float(self.argmin_k)!r}",
        ]
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text):
        kv = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise InvalidArgument(f"malformed report line: {line!r}")
            kv[key.strip()] = value.strip()
        try:
            params = PcfParams(kv["family"], *(float(kv[k]) for k in cls._FLOATS))
            return cls(
                params=params,
                rho=float(kv["rho"]),
                feasible=kv["feasible"] == "true",
                min_power=float(kv["min_power"]),
                n=int(kv["n"]),
                d=int(kv["d"]),
                argmin_k=float(kv.get("argmin_k", "nan")),
            )
        except KeyError as exc:
            raise InvalidArgument(f"report is missing key {exc}") from None

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read())

    @property
    def spec(self):
        return DesignSpec(self.n, self.d)


def _report(spec, params, res, table):
    return CoverageReport(
        params=params,
        rho=relative_radius(params.r_min, spec, table),
        feasible=res.report.feasible,
        min_power=res.report.min_power,
        n=spec.n,
        d=spec.d,
        argmin_k=res.report.argmin_k,
    )


_STAIR_CACHE = {}


def _stair_search(spec, p0_grid, step, max_iters, k_grid, tol):
    """Best SFSD result for every ``p0`` (warm-started along the grid)."""
    key = (spec, tuple(p0_grid), step, max_iters, k_grid, tol)
    if key in _STAIR_CACHE:
        return _STAIR_CACHE[key]
    results = []
    ratio, guess = 2.0, None
    for p0 in p0_grid:
        try:
            res = optimize_parameters(spec, p0, step, max_iters, family=Family.SFSD,
                                      ratio=ratio, r_guess=guess, k_grid=k_grid, tol=tol)
        except InfeasibleDesign:
            continue
        results.append((p0, res))
        ratio, guess = res.r_1 / res.r_min, res.r_min
    _STAIR_CACHE[key] = results
    return results


def _tail_candidates(spec, exhaustive):
    cands = [
        scaled_oscillation(spec, al, be, ka, ph)
        for al in _TAIL_ALPHA
        for be in _TAIL_BETA
        for ka in _TAIL_KAPPA
        for ph in _TAIL_PHASE
    ]
    if exhaustive:
        cands += [(a, b, c, ph) for a in _RAW_A for b in _RAW_B for c in _RAW_C for ph in _RAW_D]
    return cands


def search_design(spec, family, p0_grid=DEFAULT_P0_GRID, osc_defaults=None, *,
                  step=1.0, max_iters=100, top=3, exhaustive=False, k_grid=None,
                  table=None, tol=REALIZABILITY_TOL):
    """Maximize ``r_min`` over the peak-height grid for one family.

    PDS reduces to a one-dimensional feasibility search over ``r_min``.
    SFSD runs :func:`optimize_parameters` for each ``p0``. PROPOSED starts
    from the ``top`` best stair solutions, picks a tail for each from a
    coarse candidate set (plus ``osc_defaults`` when given, and the raw
    parameter ranges when ``exhaustive``), re-optimizes with that tail and
    keeps the best. A tail is only adopted when it does not shrink
    ``r_min``; otherwise the zero-amplitude member (identical to the stair)
    is reported.
    """
    family = Family.parse(family)
    p0_grid = tuple(float(p) for p in p0_grid)
    if not p0_grid:
        raise InvalidArgument("p0_grid is empty")
    if any(not 1.0 <= p <= 2.5 for p in p0_grid):
        raise InvalidArgument("p0_grid values must lie in [1.0, 2.5]")

    if family is Family.PDS:
        prob = _Problem(spec, Family.PDS, 1.0, None, k_grid, tol)
        r = prob.boundary(1.0, prob.rbar)
        if r is None:
            raise InfeasibleDesign(f"no realizable PDS radius for {spec}")
        params = PcfParams(Family.PDS, r)
        res = OptimizeResult(r, r, prob.report(r, r))
        return _report(spec, params, res, table)

    stairs = _stair_search(spec, p0_grid, step, max_iters, k_grid, tol)
    if not stairs:
        raise InfeasibleDesign(f"every p0 in the grid is infeasible for {spec}")
    p0, best = max(stairs, key=lambda item: item[1].r_min)
    if family is Family.SFSD:
        params = PcfParams(Family.SFSD, best.r_min, best.r_1, p0)
        return _report(spec, params, best, table)

    candidates = _tail_candidates(spec, exhaustive)
    if osc_defaults is not None:
        candidates.insert(0, tuple(osc_defaults))
    ranked = sorted(stairs, key=lambda item: -item[1].r_min)[: max(1, top)]
    best_params, best_res = PcfParams(Family.PROPOSED, best.r_min, best.r_1, p0, 0.0), best
    for p0, stair in ranked:
        ratio = stair.r_1 / stair.r_min
        tail, tail_r = None, stair.r_min
        for osc in candidates:
            prob = _Problem(spec, Family.PROPOSED, p0, osc, k_grid, tol)
            r = prob.boundary(ratio, stair.r_min)
            if r is not None and r > tail_r:
                tail, tail_r = osc, r
        if tail is None:
            continue
        res = optimize_parameters(spec, p0, step, max_iters, family=Family.PROPOSED,
                                  oscillation=tail, ratio=ratio, r_guess=tail_r,
                                  k_grid=k_grid, tol=tol)
        if res.r_min > best_res.r_min:
            best_params = PcfParams(Family.PROPOSED, res.r_min, res.r_1, p0, *tail)
            best_res = res
    return _report(spec, best_params, best_res, table)
