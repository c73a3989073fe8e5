"""Orbital dynamics of optically excited defect spins.

Forward models (master equation and rate equations, closed-form decay
and depolarization envelopes, phonon scaling laws, golden-rule crossing
rates) together with the estimation pipeline that extracts the
underlying rates from photon-count time traces.

Canonical units: angular rates in rad/ns (display convention
"2 pi x MHz"), times in ns, energies in meV, temperatures in K.
"""

from .core import (
    CONSTANTS,
    AngularRate,
    Constants,
    EnergyMeV,
    NvphononError,
    TemperatureK,
    TimeTrace,
    ValidationError,
    rate_from_linear_mhz,
    thermal_energy,
)
from .closedform import (
    EnvelopeParams,
    additional_decoherence,
    depolarization_populations,
    envelope_timescales,
    fluorescence_a12,
    isc_envelope_ex,
    isc_rate_from_lifetime,
    observed_polarized_intensity,
    rabi_envelope,
    rabi_fit_model,
)
from .dynamics import (
    DensityMatrix3,
    EvolutionResult,
    IntegrationError,
    RateMatrixModel,
    ThreeLevelModel,
    build_a12_model,
    evolve_lindblad,
    evolve_rates,
)
from .phonon import (
    MIXING_FIT_DEFAULT,
    MixingFitForm,
    OverlapSupportError,
    OverlapTable,
    PhononCoupling,
    SpinOrbit,
    coefficient_from_eta,
    crossing_ratio,
    effective_isc_rates,
    eta_from_coefficient,
    isc_rate_a1,
    isc_rate_e12,
    mixing_rate_fitform,
    mixing_rate_fitform_clamped,
    mixing_rate_t5,
    ratio_scan,
    spectral_density,
)
from .estimate import (
    FitResult,
    FitWindow,
    ensemble_spread,
    fit_depolarization,
    fit_exponential_window,
    fit_gamma_a1,
    fit_rabi_trace,
    fit_t5,
    nlls,
    t5_confidence_band,
)
from .synth import (
    ExperimentSpec,
    ModelError,
    generate,
    generate_background_pair,
    model_intensity,
    reject_before,
    subtract_background,
)

__version__ = "0.1.0"

__all__ = [
    "CONSTANTS",
    "AngularRate",
    "Constants",
    "DensityMatrix3",
    "EnergyMeV",
    "EnvelopeParams",
    "EvolutionResult",
    "ExperimentSpec",
    "FitResult",
    "FitWindow",
    "IntegrationError",
    "MIXING_FIT_DEFAULT",
    "MixingFitForm",
    "ModelError",
    "NvphononError",
    "OverlapSupportError",
    "OverlapTable",
    "PhononCoupling",
    "RateMatrixModel",
    "SpinOrbit",
    "TemperatureK",
    "ThreeLevelModel",
    "TimeTrace",
    "ValidationError",
    "additional_decoherence",
    "build_a12_model",
    "coefficient_from_eta",
    "crossing_ratio",
    "depolarization_populations",
    "effective_isc_rates",
    "ensemble_spread",
    "envelope_timescales",
    "eta_from_coefficient",
    "evolve_lindblad",
    "evolve_rates",
    "fit_depolarization",
    "fit_exponential_window",
    "fit_gamma_a1",
    "fit_rabi_trace",
    "fit_t5",
    "fluorescence_a12",
    "generate",
    "generate_background_pair",
    "isc_envelope_ex",
    "isc_rate_a1",
    "isc_rate_e12",
    "isc_rate_from_lifetime",
    "mixing_rate_fitform",
    "mixing_rate_fitform_clamped",
    "mixing_rate_t5",
    "model_intensity",
    "nlls",
    "observed_polarized_intensity",
    "rabi_envelope",
    "rabi_fit_model",
    "rate_from_linear_mhz",
    "ratio_scan",
    "reject_before",
    "spectral_density",
    "subtract_background",
    "t5_confidence_band",
    "thermal_energy",
]
