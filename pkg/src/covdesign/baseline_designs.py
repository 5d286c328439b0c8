"""Standard exploratory designs used as comparison arms."""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .errors import InvalidArgument
from .synthesis import PointSet

__all__ = [
    "Method",
    "GeneratorConfig",
    "trial_seed",
    "uniform_random",
    "lhs",
    "sobol",
    "generate",
]

SOBOL_MAX_DIM = 8


class Method(str, enum.Enum):
    RANDOM = "random"
    LHS = "lhs"
    SOBOL = "sobol"


@dataclass(frozen=True)
class GeneratorConfig:
    method: Method = Method.RANDOM
    seed: int = 0
    skip: int = 1

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.skip < 0:
            raise InvalidArgument("skip must be >= 0")


def trial_seed(base_seed, trial):
    """Seed for trial ``trial`` of a multi-trial experiment."""
    return int(base_seed) + int(trial)


def uniform_random(spec, seed=0):
    x = np.random.default_rng(seed).random((spec.n, spec.d))
    return PointSet(x, {"method": "random", "seed": seed})


def lhs(spec, seed=0):
    """Latin hypercube: one jittered point per stratum of width ``1/n`` on every axis."""
    rng = np.random.default_rng(seed)
    x = np.empty((spec.n, spec.d))
    for p in range(spec.d):
        x[:, p] = (rng.permutation(spec.n) + rng.random(spec.n)) / spec.n
    return PointSet(x, {"method": "lhs", "seed": seed})


def sobol(spec, skip=1):
    """Unscrambled Sobol points ``skip .. skip + n - 1`` (Joe-Kuo direction numbers)."""
    if spec.d > SOBOL_MAX_DIM:
        raise InvalidArgument(f"Sobol points are only provided for d <= {SOBOL_MAX_DIM}")
    if skip < 1:
        raise InvalidArgument("skip must be >= 1; the all-zero first point is always dropped")
    eng = qmc.Sobol(spec.d, scramble=False)
    eng.fast_forward(skip)
    with warnings.catch_warnings():
        # balance properties need powers of two; any n is allowed here
        warnings.simplefilter("ignore", UserWarning)
        x = eng.random(spec.n)
    return PointSet(x, {"method": "sobol", "skip": skip})


def generate(spec, cfg):
    cfg = cfg if isinstance(cfg, GeneratorConfig) else GeneratorConfig(cfg)
    if cfg.method is Method.RANDOM:
        return uniform_random(spec, cfg.seed)
    if cfg.method is Method.LHS:
        return lhs(spec, cfg.seed)
    return sobol(spec, cfg.skip)
