"""Data-driven selection of transferable sources.

The target sample is split in half. A lasso quantile fit on the first half
is the baseline; for every source a transfer estimate is built from the same
half plus that source. Sources whose estimate predicts the held-out half no
worse than ``(1 + epsilon0)`` times the baseline are selected, and the
transfer estimator is refitted on the full target with the selected sources.

Row indices of the split are 0-based positions into the target sample.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import (DomainDataset, InvalidInputError, MultiSourceData, as_tau, check_loss)
from .solver import (PenalizedFit, SolverConfig, cross_validate_lambda, fit_penalized_qr)
from .transfer import TransferEstimate, oracle_transfer


@dataclass(frozen=True)
class DetectionConfig:
    """Tuning of the selection procedure.

    Penalties left as ``None`` are chosen by cross-validation, except that
    ``lambda_beta_rule="theory"`` sets the per-source transfer penalty to
    ``4 L sqrt(2 log p / (2 n_k + n_T0))`` with ``L`` the largest absolute
    covariate entry. ``debias=False`` uses only the pooled step for the
    candidates.
    """

    epsilon0: float = 0.01
    lambda_0: float | None = None
    lambda_beta: tuple | None = None
    lambda_delta: tuple | None = None
    lambda_beta_rule: str = "cv"
    debias: bool = True
    split_seed: int = 0
    folds: int = 5
    cv_seed: int = 0

    def __post_init__(self):
        if not self.epsilon0 >= 0:
            raise InvalidInputError("epsilon0 must be non-negative")
        if self.lambda_beta_rule not in ("cv", "theory"):
            raise InvalidInputError("lambda_beta_rule must be 'cv' or 'theory'")
        if self.split_seed < 0:
            raise InvalidInputError("split_seed must be non-negative")


@dataclass(frozen=True)
class DetectionResult:
    selected: tuple
    baseline_loss: float
    source_losses: np.ndarray
    split: tuple
    final_estimate: TransferEstimate
    epsilon0: float = 0.01


def split_target(n0: int, seed: int = 0) -> tuple:
    """Random halves ``(T0, V0)`` of sizes ceil(n0/2) and floor(n0/2), each sorted."""
    if n0 < 4:
        raise InvalidInputError("the target needs at least 4 observations to split")
    perm = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5B1])).permutation(n0)
    n_train = (n0 + 1) // 2
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def validation_loss(beta, target: DomainDataset, V0, tau) -> float:
    """Mean check loss of ``beta`` over the rows ``V0`` of the target."""
    tau = as_tau(tau)
    V0 = np.asarray(V0, dtype=int)
    if V0.size == 0:
        raise InvalidInputError("validation set is empty")
    if V0.min() < 0 or V0.max() >= target.n:
        raise InvalidInputError("validation rows out of range")
    r = target.y[V0] - target.Z[V0] @ np.asarray(beta, dtype=float)
    return float(np.mean(check_loss(r, tau)))


def lasso_baseline(target: DomainDataset, T0, tau, lambda_0=None,
                   config: SolverConfig | None = None, folds=5, cv_seed=0) -> PenalizedFit:
    data = MultiSourceData(target.subset(T0), ())
    if lambda_0 is None:
        lambda_0 = cross_validate_lambda(data, (0,), tau, folds=folds, seed=cv_seed).lam
    return fit_penalized_qr(data, (0,), tau, lambda_0, config=config)


def theory_lambda_beta(Z_source, Z_train, p) -> float:
    L = max(float(np.abs(Z_source).max()), float(np.abs(Z_train).max()))
    n_eff = 2 * Z_source.shape[0] + Z_train.shape[0]
    return 4.0 * L * np.sqrt(2.0 * np.log(p) / n_eff)


def per_source_candidate(target_T0: DomainDataset, source_k: DomainDataset, tau,
                         lambda_beta_k=None, lambda_delta_k=None,
                         config: SolverConfig | None = None, debias: bool = True, folds=5,
                         cv_seed=0) -> np.ndarray:
    """Transfer estimate from the training half and one source."""
    src = DomainDataset(source_k.y, source_k.Z, 1)
    data = MultiSourceData(DomainDataset(target_T0.y, target_T0.Z, 0), (src,))
    if debias:
        est = oracle_transfer(data, (1,), tau, lambda_beta_k, lambda_delta_k, config, folds,
                              cv_seed)
        return est.beta_target
    if lambda_beta_k is None:
        lambda_beta_k = cross_validate_lambda(data, (0, 1), tau, folds=folds, seed=cv_seed).lam
    return fit_penalized_qr(data, (0, 1), tau, lambda_beta_k, config=config).beta


def select_sources(baseline_loss: float, source_losses, epsilon0: float) -> tuple:
    """Sources whose loss is at most (1 + epsilon0) times the baseline's; ties count."""
    thr = (1.0 + epsilon0) * baseline_loss
    return tuple(k + 1 for k, v in enumerate(np.asarray(source_losses)) if v <= thr)


def _per_source(values, K, name):
    if values is None:
        return (None,) * K
    values = tuple(values)
    if len(values) != K:
        raise InvalidInputError(f"{name} needs one entry per source")
    return values


def detect(data: MultiSourceData, tau, config: DetectionConfig | None = None,
           transfer_fn: Callable | None = None,
           solver_config: SolverConfig | None = None) -> DetectionResult:
    """Select transferable sources and refit on the full target.

    ``transfer_fn(transfer_set)`` may supply the final estimate, which lets a
    caller reuse fits it already has; it defaults to ``oracle_transfer`` with
    CV-tuned penalties.
    """
    tau = as_tau(tau)
    config = config or DetectionConfig()
    K = data.K
    if K < 1:
        raise InvalidInputError("detection needs at least one source")
    lam_b = _per_source(config.lambda_beta, K, "lambda_beta")
    lam_d = _per_source(config.lambda_delta, K, "lambda_delta")
    T0, V0 = split_target(data.target.n, config.split_seed)
    train = data.target.subset(T0)
    base = lasso_baseline(data.target, T0, tau, config.lambda_0, solver_config, config.folds,
                          config.cv_seed)
    base_loss = validation_loss(base.beta, data.target, V0, tau)
    losses = np.empty(K)
    for k in range(1, K + 1):
        src = data.domain(k)
        lb = lam_b[k - 1]
        if lb is None and config.lambda_beta_rule == "theory":
            lb = theory_lambda_beta(src.Z, train.Z, data.p)
        cand = per_source_candidate(train, src, tau, lb, lam_d[k - 1], solver_config,
                                    config.debias, config.folds, config.cv_seed)
        losses[k - 1] = validation_loss(cand, data.target, V0, tau)
    selected = select_sources(base_loss, losses, config.epsilon0)
    if transfer_fn is None:
        final = oracle_transfer(data, selected, tau, config=solver_config, folds=config.folds,
                                cv_seed=config.cv_seed)
    else:
        final = transfer_fn(selected)
    losses.setflags(write=False)
    return DetectionResult(selected, base_loss, losses, (T0, V0), final, config.epsilon0)
