"""Maximal-coverage sample designs from parameterized pair correlation functions."""
from .design_search import (
    CoverageReport,
    DesignSpec,
    PackingTable,
    default_radial_grid,
    default_spectral_grid,
    max_radius,
    optimize_parameters,
    reference_radius,
    relative_radius,
    search_design,
)
from .errors import InfeasibleDesign, InvalidArgument, NumericalFailure, PartialDesign
from .eval_harness import BenchmarkFunction, blind_eval, seqopt_eval
from .pcf_models import Family, PcfParams, RadialGrid, RadialProfile, target_profile
from .spectral import (
    SpectralGrid,
    SpectrumProfile,
    check_realizability,
    empirical_psd,
    pcf_to_psd,
)
from .synthesis import PointSet, SynthesisConfig, dart_throwing, estimate_pcf, synthesize

__version__ = "0.1.0"
