"""Benchmark functions, regression-recovery evaluation and sequential sampling.

Designs live in the unit cube and are mapped affinely onto each function's
native box before evaluation. The default regression oracle is a
``k``-nearest-neighbour interpolator with inverse-distance weights.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.stats import norm

from .baseline_designs import lhs, sobol, trial_seed, uniform_random
from .design_search import DesignSpec, default_radial_grid, max_radius, search_design
from .errors import InvalidArgument, NumericalFailure, PartialDesign
from .pcf_models import Family, target_profile
from .synthesis import EstimatorConfig, PointSet, SynthesisConfig, dart_throwing, synthesize

__all__ = [
    "BenchmarkFunction",
    "OracleKind",
    "OracleConfig",
    "EvalResult",
    "GpModel",
    "alpine1",
    "ackley",
    "eval_function",
    "grid_test_set",
    "fit_predict",
    "design_method",
    "coverage_design",
    "blind_eval",
    "gp_fit",
    "gp_predict",
    "expected_improvement",
    "bayes_opt_run",
    "seqopt_eval",
    "precision_metric",
]

_BOUNDS = {"alpine1": (-10.0, 10.0), "ackley": (-32.768, 32.768)}


def _alpine1(x):
    return np.sum(np.abs(x * np.sin(x) + 0.1 * x), axis=-1)


def _ackley(x):
    d = x.shape[-1]
    a = -20.0 * np.exp(-0.2 * np.sqrt(np.sum(x * x, axis=-1) / d))
    b = -np.exp(np.sum(np.cos(2 * np.pi * x), axis=-1) / d)
    return a + b + 20.0 + math.e


_FORMS = {"alpine1": _alpine1, "ackley": _ackley}


@dataclass(frozen=True)
class BenchmarkFunction:
    name: str
    d: int
    lower: float | None = None
    upper: float | None = None

    def __post_init__(self):
        name = str(self.name).lower()
        if name not in _FORMS:
            raise InvalidArgument(f"unknown function {self.name!r}")
        object.__setattr__(self, "name", name)
        if int(self.d) != self.d or self.d < 1:
            raise InvalidArgument("d must be a positive integer")
        lo, hi = _BOUNDS[name]
        if self.lower is None:
            object.__setattr__(self, "lower", lo)
        if self.upper is None:
            object.__setattr__(self, "upper", hi)
        if not (math.isfinite(self.lower) and math.isfinite(self.upper) and self.lower < self.upper):
            raise InvalidArgument("bounds must be finite with lower < upper")

    def to_native(self, u):
        return self.lower + (self.upper - self.lower) * u


def alpine1(d):
    return BenchmarkFunction("alpine1", d)


def ackley(d):
    return BenchmarkFunction("ackley", d)


def _as_array(points):
    return points.coords if isinstance(points, PointSet) else np.asarray(points, dtype=float)


def eval_function(f, u):
    """Evaluate ``f`` at unit-cube point(s) ``u`` (shape ``(d,)`` or ``(n, d)``)."""
    u = _as_array(u)
    if u.shape[-1] != f.d:
        raise InvalidArgument(f"expected {f.d} coordinates, got {u.shape[-1]}")
    if np.any(u < 0) or np.any(u > 1):
        raise InvalidArgument("input outside the unit cube")
    out = _FORMS[f.name](f.to_native(u))
    return float(out) if np.ndim(out) == 0 else out


def _ceil_root(target, d):
    m = max(1, int(round(target ** (1.0 / d))))
    while m**d < target:
        m += 1
    while m > 1 and (m - 1) ** d >= target:
        m -= 1
    return m


def grid_test_set(f, target=10_000):
    """Regular grid with ``ceil(target^(1/d))`` nodes per axis, endpoints included."""
    if target < 1:
        raise InvalidArgument("target must be >= 1")
    m = _ceil_root(int(target), f.d)
    axis = np.linspace(0.0, 1.0, m) if m > 1 else np.array([0.5])
    mesh = np.meshgrid(*([axis] * f.d), indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=1)
    return PointSet(pts, {"method": "grid"}), eval_function(f, pts)


class OracleKind(str, enum.Enum):
    KNN = "knn"
    TREE_ENSEMBLE = "tree_ensemble"


@dataclass(frozen=True)
class OracleConfig:
    kind: OracleKind = OracleKind.KNN
    k: int = 5
    trees: int = 100
    max_depth: int | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", OracleKind(self.kind))
        if self.k < 1:
            raise InvalidArgument("k must be >= 1")
        if self.trees < 1:
            raise InvalidArgument("trees must be >= 1")


def _knn(x_train, y_train, x_test, k, chunk=2048):
    k = min(k, len(x_train))
    out = np.empty(len(x_test))
    for s in range(0, len(x_test), chunk):
        q = x_test[s : s + chunk]
        dist = np.sqrt(((q[:, None, :] - x_train[None, :, :]) ** 2).sum(-1))
        # stable sort keeps the lower training index first on exact ties
        idx = np.argsort(dist, axis=1, kind="stable")[:, :k]
        dk = np.take_along_axis(dist, idx, axis=1)
        yk = y_train[idx]
        exact = dk[:, 0] == 0
        with np.errstate(divide="ignore"):
            w = 1.0 / dk
        w[exact] = 0.0
        pred = (w * yk).sum(1) / np.where(exact, 1.0, w.sum(1))
        pred[exact] = yk[exact, 0]
        out[s : s + chunk] = pred
    return out


def fit_predict(train, y, test, cfg=None):
    """Fit the regression oracle on ``(train, y)`` and predict at ``test``."""
    cfg = cfg or OracleConfig()
    x_train, x_test = _as_array(train), _as_array(test)
    y = np.asarray(y, dtype=float)
    if len(x_train) == 0:
        raise InvalidArgument("training set is empty")
    if cfg.kind is OracleKind.KNN:
        return _knn(x_train, y, x_test, cfg.k)
    from sklearn.ensemble import RandomForestRegressor

    forest = RandomForestRegressor(
        n_estimators=cfg.trees,
        max_depth=cfg.max_depth,
        max_features=math.ceil(math.sqrt(x_train.shape[1])),
        bootstrap=True,
        random_state=cfg.seed,
        n_jobs=1,
    )
    forest.fit(x_train, y)
    return forest.predict(x_test)


@functools.lru_cache(maxsize=64)
def _coverage_target(family, n, d):
    spec = DesignSpec(n, d)
    report = search_design(spec, family)
    return target_profile(report.params, default_radial_grid(spec)), report


def coverage_design(family, spec, seed=0, t_max=1000, sigma_scale=1.0):
    """Synthesize a point set matching the optimized PCF of ``family`` for ``spec``."""
    target, _ = _coverage_target(Family.parse(family).value, spec.n, spec.d)
    est = EstimatorConfig.for_grid(target.grid, spec.d, sigma_scale)
    cfg = SynthesisConfig(t_max=t_max, seed=seed, estimator=est)
    points, _ = synthesize(target, spec, cfg)
    points.meta["method"] = Family.parse(family).value
    return points


def design_method(name, **options):
    """Return ``generator(spec, seed) -> PointSet`` for a method name."""
    name = str(name).lower()
    if name == "random":
        return uniform_random
    if name == "lhs":
        return lhs
    if name == "sobol":
        return lambda spec, seed: sobol(spec, options.get("skip", 1))
    if name == "pds-dart":
        frac = options.get("r_frac", 0.7)

        def dart(spec, seed):
            r = options.get("r_min") or frac * max_radius(spec)
            return dart_throwing(r, spec, options.get("max_failures", 100_000), seed)

        return dart
    if name in ("sfsd", "proposed", "pds"):
        t_max = options.get("t_max", 1000)
        return lambda spec, seed: coverage_design(name, spec, seed, t_max)
    raise InvalidArgument(f"unknown design method {name!r}")


@dataclass
class EvalResult:
    method: str
    function: str
    d: int
    n: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.size < 1:
            raise InvalidArgument("an EvalResult needs at least one trial")

    @property
    def trials(self):
        return int(self.values.size)

    @property
    def mse_mean(self):
        return float(np.mean(self.values))

    @property
    def mse_std(self):
        return float(np.std(self.values))

    HEADER = "method,function,d,n,trials,mse_mean,mse_std"

    def csv_row(self):
        return (f"{self.method},{self.function},{self.d},{self.n},{self.trials},"
                f"{self.mse_mean!r},{self.mse_std!r}")

    def to_csv(self, path=None):
        text = self.HEADER + "\n" + self.csv_row() + "\n"
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def trials_csv(self):
        return "trial,mse\n" + "".join(f"{t},{v!r}\n" for t, v in enumerate(self.values.tolist()))


def _run_trial(generator, spec, seed, trial):
    try:
        return generator(spec, seed)
    except PartialDesign as exc:
        raise PartialDesign(f"trial {trial}: {exc}", exc.achieved) from exc
    except Exception as exc:
        raise type(exc)(f"trial {trial}: {exc}") from exc


def blind_eval(method, f, n, trials, cfg=None, base_seed=0, test_target=10_000):
    """Mean recovery MSE of the oracle trained on one-shot designs.

    ``method`` is a method name or a callable ``(spec, seed) -> PointSet``.
    """
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    cfg = cfg or OracleConfig()
    gen = design_method(method) if isinstance(method, str) else method
    name = method if isinstance(method, str) else getattr(method, "__name__", "custom")
    spec = DesignSpec(n, f.d)
    test, y_test = grid_test_set(f, test_target)
    mse = []
    for t in range(trials):
        pts = _run_trial(gen, spec, trial_seed(base_seed, t), t)
        y = eval_function(f, pts)
        pred = fit_predict(pts, y, test, cfg)
        mse.append(float(np.mean((pred - y_test) ** 2)))
    return EvalResult(name, f.name, f.d, n, mse)


@dataclass
class GpModel:
    x: np.ndarray
    y: np.ndarray
    length_scale: float
    signal_var: float
    noise: float
    chol: tuple = field(repr=False)
    alpha: np.ndarray = field(repr=False)

    def kernel(self, a, b):
        return _se_kernel(a, b, self.length_scale, self.signal_var)


def _se_kernel(a, b, ell, s2):
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
    return s2 * np.exp(-0.5 * d2 / (ell * ell))


def gp_fit(x, y, length_scale=0.2, signal_var=1.0, noise=1e-6, max_jitter=1e-3):
    """Zero-mean GP posterior with a squared-exponential kernel.

    The diagonal jitter starts at ``noise`` and grows tenfold until the
    Cholesky factorization succeeds or exceeds ``max_jitter``.
    """
    x = _as_array(x)
    y = np.asarray(y, dtype=float)
    if len(x) < 1:
        raise InvalidArgument("gp_fit needs at least one point")
    if not noise > 0:
        raise InvalidArgument("noise must be positive")
    k = _se_kernel(x, x, length_scale, signal_var)
    jitter = noise
    while True:
        try:
            chol = cho_factor(k + jitter * np.eye(len(x)), lower=True)
            break
        except LinAlgError:
            jitter *= 10
            if jitter > max_jitter:
                raise NumericalFailure("GP covariance is not positive definite") from None
    alpha = cho_solve(chol, y)
    return GpModel(x, y, length_scale, signal_var, jitter, chol, alpha)


def gp_predict(model, x):
    """Posterior mean and variance at ``x``."""
    x = np.atleast_2d(_as_array(x))
    ks = model.kernel(x, model.x)
    mean = ks @ model.alpha
    v = cho_solve(model.chol, ks.T)
    var = model.signal_var - np.einsum("ij,ji->i", ks, v)
    return mean, np.maximum(var, 0.0)


def expected_improvement(model, x, best):
    """EI for minimization; reduces to ``max(best - mu, 0)`` where sigma is 0."""
    mean, var = gp_predict(model, x)
    sd = np.sqrt(var)
    gap = best - mean
    ei = np.maximum(gap, 0.0)
    pos = sd > 0
    z = gap[pos] / sd[pos]
    ei[pos] = gap[pos] * norm.cdf(z) + sd[pos] * norm.pdf(z)
    return np.maximum(ei, 0.0)


def bayes_opt_run(init, f, budget, candidate_pool=2048, seed=0, length_scale=0.2):
    """Add ``budget`` points one at a time by maximizing EI over random pools.

    Returns
    -------
    (PointSet, numpy.ndarray)
        All evaluated points and the best value after each addition.
    """
    if budget < 0:
        raise InvalidArgument("budget must be >= 0")
    x = _as_array(init).copy()
    if len(x) == 0:
        raise InvalidArgument("initial design is empty")
    y = np.asarray(eval_function(f, x), dtype=float).reshape(-1)
    rng = np.random.default_rng(seed)
    trace = np.empty(budget)
    for it in range(budget):
        try:
            model = gp_fit(x, y, length_scale)
        except NumericalFailure as exc:
            raise NumericalFailure(f"iteration {it}: {exc}") from exc
        pool = rng.random((candidate_pool, f.d))
        ei = expected_improvement(model, pool, float(y.min()))
        j = int(np.argmax(ei))
        x = np.vstack([x, pool[j]])
        y = np.append(y, eval_function(f, pool[j]))
        trace[it] = y.min()
    meta = dict(init.meta) if isinstance(init, PointSet) else {}
    meta.update(bayes_opt_budget=budget, bayes_opt_seed=seed)
    return PointSet(x, meta), trace


def seqopt_eval(method, f, n_init, budget, trials, cfg=None, base_seed=0,
                candidate_pool=2048, test_target=10_000):
    """Recovery MSE after Bayes-Opt growth from each method's initial design.

    Returns the EvalResult and the per-trial best-so-far traces.
    """
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    cfg = cfg or OracleConfig()
    gen = design_method(method) if isinstance(method, str) else method
    name = method if isinstance(method, str) else getattr(method, "__name__", "custom")
    spec = DesignSpec(n_init, f.d)
    test, y_test = grid_test_set(f, test_target)
    mse, traces = [], []
    for t in range(trials):
        seed = trial_seed(base_seed, t)
        init = _run_trial(gen, spec, seed, t)
        pts, trace = bayes_opt_run(init, f, budget, candidate_pool, seed)
        pred = fit_predict(pts, eval_function(f, pts), test, cfg)
        mse.append(float(np.mean((pred - y_test) ** 2)))
        traces.append(trace)
    return EvalResult(name, f.name, f.d, n_init, mse), traces


def precision_metric(scores, tau):
    """Number of scores strictly above ``tau``."""
    return int(sum(1 for s in scores if s > tau))
