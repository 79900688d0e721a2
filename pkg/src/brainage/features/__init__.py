"""Measure catalogue, epoch-averaged extraction and training-set variants."""
from .catalogue import BAND_NAMES, MEASURE_NAMES, MEASURES, PER_CHANNEL, FeatureDescriptor, columns_for
from .extraction import (
    VARIANTS,
    DatasetError,
    FeatureMatrix,
    Standardizer,
    average_epochs,
    build_training_set,
    epoch_measures,
    extract_recording,
    standardize_fit_apply,
    variant_spec,
)
from .measures import (
    BANDS,
    DegenerateSignalWarning,
    FeatureError,
    band_powers,
    complexity_features,
    entropy_features,
    psd_regression_features,
    quantile_features,
    temporal_features,
    wavelet_energies,
)

__all__ = [
    "BANDS", "BAND_NAMES", "MEASURES", "MEASURE_NAMES", "PER_CHANNEL", "VARIANTS",
    "DatasetError", "DegenerateSignalWarning", "FeatureDescriptor", "FeatureError",
    "FeatureMatrix", "Standardizer", "average_epochs", "band_powers", "build_training_set",
    "columns_for", "complexity_features", "entropy_features", "epoch_measures",
    "extract_recording", "psd_regression_features", "quantile_features",
    "standardize_fit_apply", "temporal_features", "variant_spec", "wavelet_energies",
]
