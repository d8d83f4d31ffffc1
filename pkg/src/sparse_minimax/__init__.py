"""Minimax lower bounds for matrix completion under sparse factor models."""

from .bounds import (BoundConstants, BoundReport, corollary_bound, general_lower_bound,
                     poisson_lower_bound, upper_bound_rate)
from .channels import (GaussianChannel, LaplaceChannel, Link, NoiseChannel, OneBitChannel,
                       PoissonChannel, compute_c_f, compute_c_f_prime, logistic, probit)
from .core import FactorPair, ModelClassParams, RiskEstimate, check_membership
from .estimators import EstimatorConfig, estimate_plugin, estimate_sparse_mle, estimate_zero
from .packing import PackingSet, TsybakovCertificate, build_packing, verify_tsybakov, vg_code
from .sim import draw_mask, monte_carlo_risk, observe

__all__ = [
    "BoundConstants", "BoundReport", "corollary_bound", "general_lower_bound",
    "poisson_lower_bound", "upper_bound_rate",
    "GaussianChannel", "LaplaceChannel", "Link", "NoiseChannel", "OneBitChannel",
    "PoissonChannel", "compute_c_f", "compute_c_f_prime", "logistic", "probit",
    "FactorPair", "ModelClassParams", "RiskEstimate", "check_membership",
    "EstimatorConfig", "estimate_plugin", "estimate_sparse_mle", "estimate_zero",
    "PackingSet", "TsybakovCertificate", "build_packing", "verify_tsybakov", "vg_code",
    "draw_mask", "monte_carlo_risk", "observe",
]

__version__ = "0.1.0"
