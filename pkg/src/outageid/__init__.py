"""Transmission-line outage identification from sparse PMU angle data.

The pipeline runs from a case file to a power-flow operating point, then to
a signature map, a lasso path and a minimal-diagnosable-cluster catalog.
:mod:`outageid.bench` wraps these steps in a seeded Monte-Carlo harness.
"""

from .bench import BenchConfig, NoiseModel, run_benchmark, run_method, sample_placement
from .lars import IdentificationResult, LassoPath, lars_path, select_outages, standardize
from .mdc import MdcCatalog, augment, build_mdc, diagnosability_sweep
from .netmodel import (
    NetworkModel,
    case39,
    count_islands,
    load_case,
    parse_case,
    remove_lines,
    serialize,
)
from .powerflow import SteadyState, angle_delta, jacobian_at, solve_power_flow
from .sigmap import PmuPlacement, SignatureMap, build_signature_map, dc_signature_map

__version__ = "0.1.0"

__all__ = [
    "BenchConfig",
    "IdentificationResult",
    "LassoPath",
    "MdcCatalog",
    "NetworkModel",
    "NoiseModel",
    "PmuPlacement",
    "SignatureMap",
    "SteadyState",
    "angle_delta",
    "augment",
    "build_mdc",
    "build_signature_map",
    "case39",
    "count_islands",
    "dc_signature_map",
    "diagnosability_sweep",
    "jacobian_at",
    "lars_path",
    "load_case",
    "parse_case",
    "remove_lines",
    "run_benchmark",
    "run_method",
    "sample_placement",
    "select_outages",
    "serialize",
    "solve_power_flow",
    "standardize",
]
