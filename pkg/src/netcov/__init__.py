"""Structural test-adequacy coverage for feedforward neural networks."""

from .comparison import ComparisonRun, build_mixture, compare, normalized_differences
from .config import RunConfig
from .coverage import CoverageResult, NeuronCoverage, criterion_key
from .data import Dataset, load_idx, load_raw, save_raw
from .errors import (CapabilityError, ConfigError, FormatError, InputError, NetcovError,
                     NumericError, ValidationError)
from .inference import ActivationTrace, forward, predict_labels, trace_dataset
from .mcdc import McdcCoverage, pair_order, run_mcdc
from .model import (LayerSpec, Model, Tensor, Unit, batchnorm, conv2d, dense, flatten,
                    load_model, maxpool2d, relu, save_model, unit_counts)
from .profiling import Profile, ProfileBuilder, load_profile, profile_dataset, save_profile
from .report import ReportBundle, emit_reports, render_html, report_dict
from .runner import run
from .stats import GrowthCurve, ObligationStats, summarize

__version__ = "0.1.0"

__all__ = [
    "ActivationTrace", "CapabilityError", "ComparisonRun", "ConfigError", "CoverageResult",
    "Dataset", "FormatError", "GrowthCurve", "InputError", "LayerSpec", "McdcCoverage",
    "Model", "NetcovError", "NeuronCoverage", "NumericError", "ObligationStats", "Profile",
    "ProfileBuilder", "ReportBundle", "RunConfig", "Tensor", "Unit", "ValidationError",
    "batchnorm", "build_mixture", "compare", "conv2d", "criterion_key", "dense",
    "emit_reports", "flatten", "forward", "load_idx", "load_model", "load_profile",
    "load_raw", "maxpool2d", "normalized_differences", "pair_order", "predict_labels",
    "profile_dataset", "relu", "render_html", "report_dict", "run", "run_mcdc",
    "save_model", "save_profile", "save_raw", "summarize", "trace_dataset", "unit_counts",
    "__version__",
]
