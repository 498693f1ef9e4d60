"""Outage analysis and power allocation for HARQ over correlated Nakagami-m fading.

The package covers three retransmission schemes (Type I, chase combining,
incremental redundancy) on a time-correlated Nakagami-m channel with
exponentially decaying round-to-round correlation.  It provides exact and
high-SNR outage probabilities, a closed-form solution of the
outage-constrained minimum-average-power allocation problem, numerical and
fixed-power baselines, and a Monte Carlo simulator that acts as the ground
truth for every analytical path.
"""

from .channel import (
    ChannelParams,
    correlation_factor,
    correlation_matrix,
    correlation_weight,
    mixture_weight,
    sample_amplitudes,
)
from .outage import (
    HarqConfig,
    PoleDecomposition,
    Scheme,
    TruncatedSeriesResult,
    TruncationError,
    combined_snr_cdf,
    high_snr_coefficient,
    mgf_poles,
    outage_asymptotic,
    outage_cc,
    outage_ir_lower,
    outage_type1,
    partial_fraction_coefficients,
)
from .allocation import (
    AllocationError,
    AllocationProblem,
    AllocationResult,
    allocate_closed_form,
    allocate_fixed,
    allocate_numerical_exact,
    asymptotic_outage_sequence,
    average_power,
    exact_outage_sequence,
)
from .simulation import (
    OutageEstimate,
    estimate_all_schemes,
    estimate_outage,
    estimate_outage_sequence,
)

__version__ = "0.1.0"

__all__ = [
    "AllocationError",
    "AllocationProblem",
    "AllocationResult",
    "ChannelParams",
    "HarqConfig",
    "OutageEstimate",
    "PoleDecomposition",
    "Scheme",
    "TruncatedSeriesResult",
    "TruncationError",
    "allocate_closed_form",
    "allocate_fixed",
    "allocate_numerical_exact",
    "asymptotic_outage_sequence",
    "average_power",
    "combined_snr_cdf",
    "correlation_factor",
    "correlation_matrix",
    "correlation_weight",
    "estimate_all_schemes",
    "estimate_outage",
    "estimate_outage_sequence",
    "exact_outage_sequence",
    "high_snr_coefficient",
    "mgf_poles",
    "mixture_weight",
    "outage_asymptotic",
    "outage_cc",
    "outage_ir_lower",
    "outage_type1",
    "partial_fraction_coefficients",
    "sample_amplitudes",
]
