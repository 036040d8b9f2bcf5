"""Layer-wise spectral perturbation analysis for convolutional EEG decoders.

Synthetic band-modulated EEG, a small deep ConvNet with exact receptive-field
arithmetic, amplitude and phase perturbation correlations per layer,
most-activating input windows with sinusoid/line fits, and SVG reports.
"""

__version__ = "0.1.0"

from .signal import Dataset, SynthConfig, BandRule, Trial, generate_synthetic_dataset, common_average_reference
from .spectral import Spectrum, dft_forward, dft_inverse, apply_amplitude_perturbation, apply_phase_perturbation
from .stats import pearson, wilcoxon_signed_rank, histogram
from .network import NetworkSpec, Network, ReceptiveField, default_spec, build_network
from .training import TrainConfig, train
from .perturbation import (
    CorrelationTable,
    PerturbationRunConfig,
    StatisticsError,
    aggregate_tables,
    amplitude_perturbation_correlations,
    perturbation_correlations,
    phase_perturbation_correlations,
)
from .windows import WindowSet, most_activating_windows, standardize, window_summary
from .fitting import SineFit, LinearFit, FitComparison, fit_sinusoid, fit_linear, compare_fit_errors

__all__ = [
    "Dataset", "SynthConfig", "BandRule", "Trial", "generate_synthetic_dataset", "common_average_reference",
    "Spectrum", "dft_forward", "dft_inverse", "apply_amplitude_perturbation", "apply_phase_perturbation",
    "pearson", "wilcoxon_signed_rank", "histogram",
    "NetworkSpec", "Network", "ReceptiveField", "default_spec", "build_network",
    "TrainConfig", "train",
    "CorrelationTable", "PerturbationRunConfig", "StatisticsError", "aggregate_tables",
    "amplitude_perturbation_correlations", "phase_perturbation_correlations", "perturbation_correlations",
    "WindowSet", "most_activating_windows", "standardize", "window_summary",
    "SineFit", "LinearFit", "FitComparison", "fit_sinusoid", "fit_linear", "compare_fit_errors",
]
