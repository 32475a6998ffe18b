"""twincal: joint Bayesian calibration of imperfect physical models.

Calibrates per-individual physical parameters under Gaussian-process model
discrepancy, with physics-informed priors for the Windkessel model, a
hierarchical joint model across individuals and a built-in NUTS sampler.
"""

from .diagnostics import credible_interval, ess, split_rhat
from .estimator import HierarchicalCalibrator
from .gp_core import (
    IndividualDataset,
    IndividualParams,
    ModelVariant,
    PosDefError,
    assemble,
    gaussian_logpdf,
    gaussian_logpdf_grad,
    predict_general,
    predict_pi,
)
from .hier_model import HierModel, Prior, PriorConfig, build_model, default_priors
from .kernels import SEParams, WK2Params, se_kernel, wk2_blocks
from .sampler import ChainOutput, SamplerConfig, nuts_sample
from .simulate import ToyTruth, WK3Truth, gen_cardio, gen_toy, inflow, wk3_solve

__all__ = [
    "ChainOutput",
    "HierModel",
    "HierarchicalCalibrator",
    "IndividualDataset",
    "IndividualParams",
    "ModelVariant",
    "PosDefError",
    "Prior",
    "PriorConfig",
    "SEParams",
    "SamplerConfig",
    "ToyTruth",
    "WK2Params",
    "WK3Truth",
    "assemble",
    "build_model",
    "credible_interval",
    "default_priors",
    "ess",
    "gaussian_logpdf",
    "gaussian_logpdf_grad",
    "gen_cardio",
    "gen_toy",
    "inflow",
    "nuts_sample",
    "predict_general",
    "predict_pi",
    "se_kernel",
    "split_rhat",
    "wk2_blocks",
    "wk3_solve",
]

__version__ = "0.1.0"
