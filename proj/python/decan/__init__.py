"""Wet/dry EEG contrastive alignment: synthesis, features, training and evaluation."""

from ._decan import (
    bandpass_filtfilt,
    bandpass_gain_db,
    compute_metrics,
    contrastive_loss,
    default_config,
    differential_entropy,
    extract_features,
    generate_synthetic,
    lds_smooth,
    notch_gain_db,
    paired_t_test,
    resample,
    resolve_config,
    run,
)

__all__ = [
    "bandpass_filtfilt",
    "bandpass_gain_db",
    "compute_metrics",
    "contrastive_loss",
    "default_config",
    "differential_entropy",
    "extract_features",
    "generate_synthetic",
    "lds_smooth",
    "notch_gain_db",
    "paired_t_test",
    "resample",
    "resolve_config",
    "run",
]
