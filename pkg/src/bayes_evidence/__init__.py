"""Bayesian model selection by nested sampling and variational Bayes.

Two benchmark families are provided: polynomial regression with Gaussian
noise and a one-dimensional Gaussian mixture.  For each, the evidence of
competing model sizes can be estimated by nested sampling
(:func:`run_nested`) or bounded by a mean-field variational fit
(:func:`vb_linear_fit`, :func:`vb_gmm_fit`); :mod:`bayes_evidence.harness`
runs sweeps and method comparisons on top.
"""

__version__ = "0.1.0"

from .datagen import (
    CANONICAL_POLY,
    EASY_GMM,
    HARD_GMM,
    GmmGenSpec,
    PolyGenSpec,
    generate_gmm,
    generate_polynomial,
    read_dataset,
    write_dataset,
)
from .harness import compare_methods, read_report, sweep_gmm, sweep_polynomial, write_report
from .models import Dataset, GmmModel, PolynomialModel, PriorBox, prior_transform
from .nested import EvidenceEstimate, NsConfig, posterior_samples, run_nested
from .vb_gmm import VbGmmPrior, vb_gmm_fit
from .vb_linear import VbLinearPrior, vb_linear_fit

__all__ = [
    "CANONICAL_POLY",
    "EASY_GMM",
    "HARD_GMM",
    "Dataset",
    "EvidenceEstimate",
    "GmmGenSpec",
    "GmmModel",
    "NsConfig",
    "PolyGenSpec",
    "PolynomialModel",
    "PriorBox",
    "VbGmmPrior",
    "VbLinearPrior",
    "compare_methods",
    "generate_gmm",
    "generate_polynomial",
    "posterior_samples",
    "prior_transform",
    "read_dataset",
    "read_report",
    "run_nested",
    "sweep_gmm",
    "sweep_polynomial",
    "vb_gmm_fit",
    "vb_linear_fit",
    "write_dataset",
    "write_report",
]
