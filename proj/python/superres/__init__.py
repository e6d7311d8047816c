"""Gridless sparse deconvolution: solver, certificates and experiment runner."""

from ._superres import (
    ConditionFailure,
    Unsupported,
    VerificationFailure,
    certificate,
    default_config,
    f_sequence_check,
    gauss_tsys_det,
    psf,
    run_experiment,
    score,
    solve,
    synthesize,
    weight,
    weighted_mass,
)

__all__ = [
    "ConditionFailure",
    "Unsupported",
    "VerificationFailure",
    "certificate",
    "default_config",
    "f_sequence_check",
    "gauss_tsys_det",
    "psf",
    "run_experiment",
    "score",
    "solve",
    "synthesize",
    "weight",
    "weighted_mass",
]
