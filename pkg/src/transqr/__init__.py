"""Transfer learning for high-dimensional quantile regression."""

from .core import (DomainDataset, InvalidInputError, MultiSourceData, QuantileLevel,
                   check_loss, insert_at, pooled_loss, score)
from .solver import (PenalizedFit, SolverConfig, cross_validate_lambda, fit_penalized_quadratic,
                     fit_penalized_qr, kkt_residual, lp_oracle_fit)
from .transfer import TransferEstimate, debias_step, oracle_transfer, transfer_step
from .inference import (BandwidthPolicy, DegenerateHessianError, InferenceResult,
                        ProjectionDirection, confidence_interval, estimate_gamma,
                        hessian_estimate, one_step_estimate, pooled_hessian, powell_bandwidth,
                        sigma_and_ci)
from .detection import DetectionConfig, DetectionResult, detect, split_target, validation_loss
from .simgen import SimDesign, gen_scenario

__version__ = "0.1.0"

__all__ = [
    "BandwidthPolicy", "DegenerateHessianError", "DetectionConfig", "DetectionResult",
    "DomainDataset", "InferenceResult", "InvalidInputError", "MultiSourceData", "PenalizedFit",
    "ProjectionDirection", "QuantileLevel", "SimDesign", "SolverConfig", "TransferEstimate",
    "check_loss", "confidence_interval", "cross_validate_lambda", "debias_step", "detect",
    "estimate_gamma", "fit_penalized_quadratic", "fit_penalized_qr", "gen_scenario",
    "hessian_estimate", "insert_at", "kkt_residual", "lp_oracle_fit", "one_step_estimate",
    "oracle_transfer", "pooled_hessian", "powell_bandwidth", "score", "sigma_and_ci",
    "split_target", "transfer_step", "validation_loss",
]
