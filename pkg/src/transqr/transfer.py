"""Two-step transfer estimator for a known set of transferable sources.

Step one fits an l1-penalized quantile regression on the target pooled with
the transferable sources; step two corrects the contrast on the target alone,
holding the pooled coefficients fixed as an offset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import InvalidInputError, MultiSourceData, as_tau, index_set
from .solver import (PenalizedFit, SolverConfig, cross_validate_lambda, fit_penalized_qr)


@dataclass(frozen=True)
class TransferEstimate:
    beta_pooled: np.ndarray
    delta: np.ndarray
    beta_target: np.ndarray
    lambda_beta: float
    lambda_delta: float
    transfer_set: tuple
    pooled_fit: PenalizedFit
    debias_fit: PenalizedFit | None


def _check_transfer_set(transfer_set, K) -> tuple:
    try:
        return index_set(transfer_set, 1, K)
    except InvalidInputError as exc:
        raise InvalidInputError(f"transfer set must be a subset of 1..{K}: {exc}") from None


def transfer_step(data: MultiSourceData, transfer_set, tau, lambda_beta=None, config=None,
                  folds=5, cv_seed=0) -> PenalizedFit:
    """Penalized fit on the target pooled with ``transfer_set``.

    ``lambda_beta=None`` selects the penalty by ``folds``-fold CV on the pooled sample.
    """
    tau = as_tau(tau)
    which = (0,) + _check_transfer_set(transfer_set, data.K)
    if lambda_beta is None:
        lambda_beta = cross_validate_lambda(data, which, tau, folds=folds, seed=cv_seed).lam
    return fit_penalized_qr(data, which, tau, lambda_beta, config=config)


def debias_step(beta_pooled, data: MultiSourceData, tau, lambda_delta=None, config=None,
                folds=5, cv_seed=0) -> PenalizedFit:
    """Contrast correction on the target only, with ``beta_pooled`` as offset."""
    tau = as_tau(tau)
    beta_pooled = np.asarray(beta_pooled, dtype=float)
    if beta_pooled.shape != (data.p,):
        raise InvalidInputError("pooled coefficients have the wrong length")
    if lambda_delta is None:
        lambda_delta = cross_validate_lambda(data, (0,), tau, folds=folds, seed=cv_seed,
                                             offset=beta_pooled).lam
    return fit_penalized_qr(data, (0,), tau, lambda_delta, offset=beta_pooled, config=config)


def oracle_transfer(data: MultiSourceData, transfer_set, tau, lambda_beta=None,
                    lambda_delta=None, config: SolverConfig | None = None, folds=5,
                    cv_seed=0) -> TransferEstimate:
    """Both steps in sequence.

    With an empty transfer set the pooled fit already is the target-only fit,
    so the contrast step is skipped and ``delta`` is zero.
    """
    tau = as_tau(tau)
    tset = _check_transfer_set(transfer_set, data.K)
    pooled = transfer_step(data, tset, tau, lambda_beta, config, folds, cv_seed)
    if not tset:
        delta = np.zeros(data.p)
        return TransferEstimate(pooled.beta, delta, pooled.beta + delta, pooled.lam,
                                float("nan"), tset, pooled, None)
    debias = debias_step(pooled.beta, data, tau, lambda_delta, config, folds, cv_seed)
    return TransferEstimate(pooled.beta, debias.beta, pooled.beta + debias.beta, pooled.lam,
                            debias.lam, tset, pooled, debias)
