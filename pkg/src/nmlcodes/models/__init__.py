"""Interacting binary-variable models: pairwise spin model and RBM."""

from .rbm import (
    CDConfig,
    RBMParams,
    rbm_exact_gradient,
    rbm_fit_cd,
    rbm_fit_exact,
    rbm_log_likelihood,
    rbm_log_partition,
    to_hidden01,
    to_hiddenpm1,
    visible_from_spins,
)
from .sk import (
    SKMoments,
    SKParams,
    moments_from_spins,
    sk_fit,
    sk_log_likelihood,
    sk_log_partition,
    sk_max_log_likelihood,
    sk_model_moments,
)

__all__ = [
    "CDConfig",
    "RBMParams",
    "SKMoments",
    "SKParams",
    "moments_from_spins",
    "rbm_exact_gradient",
    "rbm_fit_cd",
    "rbm_fit_exact",
    "rbm_log_likelihood",
    "rbm_log_partition",
    "sk_fit",
    "sk_log_likelihood",
    "sk_log_partition",
    "sk_max_log_likelihood",
    "sk_model_moments",
    "to_hidden01",
    "to_hiddenpm1",
    "visible_from_spins",
]
