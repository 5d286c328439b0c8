"""Command-line front end.

Exit codes: 0 success, 2 bad arguments or input, 3 infeasible or partial
design, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import shlex
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from filelock import FileLock

from .baseline_designs import trial_seed
from .design_search import (
    DEFAULT_P0_GRID,
    CoverageReport,
    DesignSpec,
    default_radial_grid,
    default_spectral_grid,
    search_design,
)
from .errors import InfeasibleDesign, InvalidArgument, NumericalFailure, PartialDesign
from .eval_harness import (
    BenchmarkFunction,
    EvalResult,
    OracleConfig,
    blind_eval,
    design_method,
    seqopt_eval,
)
from .pcf_models import Family, target_profile
from .spectral import check_realizability, pcf_to_psd
from .synthesis import EstimatorConfig, SynthesisConfig, synthesize

WORKSPACE_ENV = "COVDESIGN_WORKSPACE"
CONFIG_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 2, 3, 4


@dataclass
class DesignDefaults:
    p0_grid: list = field(default_factory=lambda: list(DEFAULT_P0_GRID))
    step: float = 1.0
    max_iters: int = 100
    tolerance: float = 1e-6
    exhaustive: bool = False


@dataclass
class SynthesisDefaults:
    iters: int = 1000
    schedule: str = "alr"
    clr_rate: float = 0.01
    sigma_scale: float = 1.0


@dataclass
class GenerateDefaults:
    skip: int = 1
    max_failures: int = 100_000
    r_frac: float = 0.7


@dataclass
class EvalDefaults:
    trials: int = 20
    oracle: str = "knn"
    k: int = 5
    trees: int = 100
    pool: int = 2048
    test_points: int = 10_000
    init: int = 50
    budget: int = 150


@dataclass
class RunConfig:
    """Every tunable default in one place; loadable from a JSON file."""

    version: int = CONFIG_VERSION
    seed: int = 0
    design: DesignDefaults = field(default_factory=DesignDefaults)
    synthesis: SynthesisDefaults = field(default_factory=SynthesisDefaults)
    generate: GenerateDefaults = field(default_factory=GenerateDefaults)
    eval: EvalDefaults = field(default_factory=EvalDefaults)

    @classmethod
    def from_mapping(cls, data):
        cfg = _build(cls, data, "")
        if cfg.version != CONFIG_VERSION:
            raise InvalidArgument(f"unsupported config version {cfg.version}")
        return cfg

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidArgument(f"{path}: {exc}") from None
        return cls.from_mapping(data)

    def to_json(self):
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n"


def _build(cls, data, prefix):
    if not isinstance(data, dict):
        raise InvalidArgument(f"config section {prefix or '<root>'} must be an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise InvalidArgument(f"unknown config keys: {', '.join(prefix + k for k in unknown)}")
    obj = cls()
    for key, value in data.items():
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            value = _build(type(current), value, prefix + key + ".")
        setattr(obj, key, value)
    return obj


class Workspace:
    """Directory tree with an append-only JSON-lines manifest."""

    def __init__(self, root):
        self.root = Path(root)
        for sub in ("designs", "profiles", "reports"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)
        self.manifest = self.root / "manifest.jsonl"

    def path(self, sub, name):
        return self.root / sub / name

    def record(self, argv, seeds, outputs):
        entry = {
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "command": " ".join(shlex.quote(a) for a in argv),
            "seeds": seeds,
            "outputs": [str(Path(p).relative_to(self.root)) for p in outputs],
        }
        with FileLock(str(self.manifest) + ".lock"):
            with open(self.manifest, "a") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _dims(text):
    text = str(text)
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(t) for t in text.split(",") if t]


def _floats(text):
    return [float(t) for t in str(text).split(",") if t]


def _families(text):
    return [Family.parse(t) for t in str(text).split(",") if t]


def _tag(family, n, d):
    return f"{family.value}_n{n}_d{d}"


def cmd_design(args, cfg, ws):
    spec = DesignSpec(args.n, args.d)
    family = Family.parse(args.family)
    dc = cfg.design
    p0_grid = _floats(args.p0_grid) if args.p0_grid else dc.p0_grid
    report = search_design(spec, family, p0_grid, step=dc.step, max_iters=dc.max_iters,
                           exhaustive=args.exhaustive or dc.exhaustive, tol=dc.tolerance)
    prof = target_profile(report.params, default_radial_grid(spec))
    k_grid = default_spectral_grid(spec)
    psd = pcf_to_psd(prof, spec.n, spec.d, k_grid)
    check = check_realizability(prof, spec.n, spec.d, k_grid, dc.tolerance)
    tag = _tag(family, spec.n, spec.d)
    out = [
        _write(ws.path("reports", f"design_{tag}.txt"), report.to_text()),
        _write(ws.path("profiles", f"pcf_{tag}.csv"), prof.to_csv()),
        _write(ws.path("profiles", f"psd_{tag}.csv"), psd.to_csv()),
        _write(ws.path("reports", f"realizability_{tag}.txt"),
               f"feasible = {str(check.feasible).lower()}\n"
               f"min_power = {float(check.min_power)!r}\nargmin_k = {float(check.argmin_k)!r}\n"),
    ]
    print(f"{family.value} n={spec.n} d={spec.d}: r_min={report.params.r_min:.6g} "
          f"rho={report.rho:.4f} feasible={str(report.feasible).lower()}")
    return out, {}


def cmd_synthesize(args, cfg, ws):
    if not Path(args.params).is_file():
        raise FileNotFoundError(args.params)
    report = CoverageReport.load(args.params)
    spec = report.spec
    sc = cfg.synthesis
    seed = args.seed if args.seed is not None else cfg.seed
    prof = target_profile(report.params, default_radial_grid(spec))
    scfg = SynthesisConfig(
        t_max=args.iters or sc.iters,
        schedule=args.schedule or sc.schedule,
        clr_rate=sc.clr_rate,
        seed=seed,
        estimator=EstimatorConfig.for_grid(prof.grid, spec.d, sc.sigma_scale),
    )
    points, trace = synthesize(prof, spec, scfg)
    tag = f"{_tag(report.params.family, spec.n, spec.d)}_{scfg.schedule.value}_s{seed}"
    csv = ws.path("designs", f"synth_{tag}.csv")
    meta = points.save(csv)
    out = [csv, Path(meta), _write(ws.path("reports", f"trace_{tag}.csv"), trace.to_csv())]
    print(f"final objective {trace.objective[-1]:.6g}, min distance {points.meta['min_distance']:.6g}")
    return out, {"seed": seed}


def cmd_generate(args, cfg, ws):
    spec = DesignSpec(args.n, args.d)
    gc = cfg.generate
    seed = args.seed if args.seed is not None else cfg.seed
    opts = {"skip": args.skip if args.skip is not None else gc.skip,
            "max_failures": gc.max_failures, "r_frac": gc.r_frac,
            "r_min": args.r_min, "t_max": args.iters or cfg.synthesis.iters}
    points = design_method(args.method, **opts)(spec, seed)
    csv = ws.path("designs", f"{args.method}_n{spec.n}_d{spec.d}_s{seed}.csv")
    meta = points.save(csv)
    print(f"wrote {points.n} points to {csv}")
    return [csv, Path(meta)], {"seed": seed}


def cmd_eval(args, cfg, ws):
    ec = cfg.eval
    trials = args.trials if args.trials is not None else ec.trials
    if trials < 1:
        raise InvalidArgument("--trials must be >= 1")
    seed = args.seed if args.seed is not None else cfg.seed
    f = BenchmarkFunction(args.function, args.d)
    oracle = OracleConfig(args.oracle or ec.oracle, k=ec.k, trees=ec.trees, seed=seed)
    method = design_method(args.method, t_max=cfg.synthesis.iters, skip=cfg.generate.skip,
                           max_failures=cfg.generate.max_failures, r_frac=cfg.generate.r_frac)
    method.__name__ = args.method
    out = []
    if args.kind == "blind":
        n = args.n
        res = blind_eval(method, f, n, trials, oracle, seed, ec.test_points)
        tag = f"blind_{args.method}_{f.name}_d{f.d}_n{n}"
        out.append(_write(ws.path("reports", f"trials_{tag}.csv"), res.trials_csv()))
    else:
        n_init = args.init if args.init is not None else ec.init
        budget = args.budget if args.budget is not None else ec.budget
        res, traces = seqopt_eval(method, f, n_init, budget, trials, oracle, seed,
                                  ec.pool, ec.test_points)
        tag = f"seqopt_{args.method}_{f.name}_d{f.d}_n{n_init}_b{budget}"
        for t, tr in enumerate(traces):
            text = "iter,best_value\n" + "".join(
                f"{i + 1},{v!r}\n" for i, v in enumerate(tr.tolist()))
            out.append(_write(ws.path("reports", f"trace_{tag}_t{t}.csv"), text))
    out.insert(0, _write(ws.path("reports", f"eval_{tag}.csv"), res.to_csv()))
    print(res.csv_row())
    return out, {"base_seed": seed, "trial_seeds": [trial_seed(seed, t) for t in range(trials)]}


def cmd_report(args, cfg, ws):
    if not args.coverage:
        raise InvalidArgument("report needs --coverage")
    families = _families(args.families)
    dims = _dims(args.d)
    dc = cfg.design
    rows = ["family,d,n,r_min,rho,feasible"]
    for d in dims:
        spec = DesignSpec(args.n, d)
        for fam in families:
            rep = search_design(spec, fam, dc.p0_grid, step=dc.step, max_iters=dc.max_iters,
                                tol=dc.tolerance)
            rows.append(f"{fam.value},{d},{spec.n},{float(rep.params.r_min)!r},{float(rep.rho)!r},"
                        f"{str(rep.feasible).lower()}")
            print(rows[-1])
    name = f"coverage_n{args.n}_d{dims[0]}-{dims[-1]}.csv"
    return [_write(ws.path("reports", name), "\n".join(rows) + "\n")], {}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InvalidArgument(message)


def _global_flags(default):
    g = _Parser(add_help=False)
    g.add_argument("--seed", type=int, default=default, help="base random seed")
    g.add_argument("--workspace", default=default,
                   help=f"workspace root (default ${WORKSPACE_ENV} or ./workspace)")
    g.add_argument("--config", default=default, help="JSON run configuration")
    return g


def build_parser():
    # sub-commands accept the global flags too; SUPPRESS keeps them from
    # overwriting values given before the sub-command
    common = _global_flags(argparse.SUPPRESS)
    p = _Parser(prog="covdesign", description=__doc__.splitlines()[0],
                parents=[_global_flags(None)])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("design", parents=[common], help="optimize PCF parameters")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--family", default="proposed")
    s.add_argument("--p0-grid", default=None, help="comma-separated peak heights")
    s.add_argument("--exhaustive", action="store_true")
    s.set_defaults(func=cmd_design)

    s = sub.add_parser("synthesize", parents=[common], help="match a design's PCF")
    s.add_argument("--params", required=True, help="report written by `design`")
    s.add_argument("--iters", type=int, default=None)
    s.add_argument("--schedule", choices=["alr", "clr"], default=None)
    s.set_defaults(func=cmd_synthesize)

    s = sub.add_parser("generate", parents=[common], help="generate a point set")
    s.add_argument("--method", required=True,
                   choices=["random", "lhs", "sobol", "pds-dart", "sfsd", "proposed"])
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--r-min", type=float, default=None)
    s.add_argument("--skip", type=int, default=None)
    s.add_argument("--iters", type=int, default=None)
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("eval", parents=[common], help="benchmark a design method")
    s.add_argument("--kind", choices=["blind", "seqopt"], required=True)
    s.add_argument("--function", default="alpine1")
    s.add_argument("--method", default="proposed")
    s.add_argument("--n", type=int, default=50)
    s.add_argument("--d", type=int, default=3)
    s.add_argument("--trials", type=int, default=None)
    s.add_argument("--init", type=int, default=None)
    s.add_argument("--budget", type=int, default=None)
    s.add_argument("--oracle", choices=["knn", "tree_ensemble"], default=None)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("report", parents=[common], help="coverage table across families")
    s.add_argument("--coverage", action="store_true")
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--d", default="2..8")
    s.add_argument("--families", default="pds,sfsd,proposed")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        root = args.workspace or os.environ.get(WORKSPACE_ENV) or "workspace"
        ws = Workspace(root)
        outputs, seeds = args.func(args, cfg, ws)
        ws.record(["covdesign", *argv], seeds, outputs)
        return EXIT_OK
    except (InvalidArgument, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InfeasibleDesign, PartialDesign) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
