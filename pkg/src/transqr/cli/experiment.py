"""Replicated comparison of the four estimators on simulated scenarios."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import product

import numpy as np

from ..detection import DetectionConfig, detect
from ..simgen import gen_scenario
from ..transfer import oracle_transfer
from .config import METHODS, ExperimentConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentRow:
    method: str
    tau: float
    h: float
    num_transferable: int
    replication: int
    l2_error: float
    detection_correct: bool | None = None
    runtime_ms: float | None = None
    selected: tuple | None = None
    error: str | None = None


def replication_seed(seed: int, r: int) -> int:
    """Seed of replication ``r``; replications are independent of each other."""
    return int(np.random.SeedSequence([int(seed), int(r)]).generate_state(1)[0])


def _cells(config: ExperimentConfig):
    return [(r, tau, h, t) for tau, h, t, r in
            product(config.taus, config.h, config.num_transferable,
                    range(config.replications))]


def run_cell(config: ExperimentConfig, r: int, tau: float, h: float, t: int) -> list:
    """All requested methods on one simulated scenario.

    Estimates are memoised by transfer set, so methods that end up with the
    same set (for instance the detected and the true one) share one fit.
    """
    seed = replication_seed(config.seed, r)
    meta = dict(tau=float(tau), h=float(h), num_transferable=int(t), replication=int(r))
    try:
        scenario = gen_scenario(config.design(h, t, tau, seed))
    except Exception as exc:  # noqa: BLE001 - recorded as an error row
        log.warning("replication %d failed to generate: %s", r, exc)
        return [ExperimentRow(m, l2_error=float("nan"), error=str(exc), **meta)
                for m in config.methods]
    data = scenario.data
    cache = {}

    def fit(tset):
        tset = tuple(tset)
        if tset not in cache:
            cache[tset] = oracle_transfer(data, tset, tau, folds=config.folds)
        return cache[tset]

    truth = scenario.transferable
    rows = {}
    for m in METHODS:
        if m not in config.methods:
            continue
        start = time.perf_counter()
        try:
            selected, correct = None, None
            if m == "non_transfer":
                est = fit(())
            elif m == "all_transfer":
                est = fit(range(1, data.K + 1))
            elif m == "oracle_transfer":
                est = fit(truth)
            else:
                res = detect(data, tau, DetectionConfig(epsilon0=config.epsilon0,
                                                        split_seed=seed, folds=config.folds),
                             transfer_fn=fit)
                est, selected = res.final_estimate, res.selected
                correct = selected == truth
            err = float(np.linalg.norm(est.beta_target - scenario.beta0))
            rows[m] = ExperimentRow(m, l2_error=err, detection_correct=correct,
                                    selected=selected, **meta)
        except Exception as exc:  # noqa: BLE001
            log.warning("method %s failed in replication %d: %s", m, r, exc)
            rows[m] = ExperimentRow(m, l2_error=float("nan"), error=str(exc), **meta)
        if config.record_runtime:
            ms = 1e3 * (time.perf_counter() - start)
            rows[m] = ExperimentRow(**{**rows[m].__dict__, "runtime_ms": ms})
    return [rows[m] for m in config.methods]


def _run_cell_args(args):
    return run_cell(*args)


def sort_rows(rows, methods=METHODS) -> list:
    order = {m: i for i, m in enumerate(methods)}
    return sorted(rows, key=lambda r: (order.get(r.method, len(order)), r.tau, r.h,
                                       r.num_transferable, r.replication))


def run_experiment(config: ExperimentConfig, progress=None) -> list:
    """Rows for every (method, tau, h, num_transferable, replication), in that order."""
    cells = _cells(config)
    jobs = [(config,) + c for c in cells]
    rows = []
    if config.threads == 1:
        for i, job in enumerate(jobs):
            rows.extend(_run_cell_args(job))
            if progress:
                progress(i + 1, len(jobs))
    else:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            for i, out in enumerate(pool.map(_run_cell_args, jobs)):
                rows.extend(out)
                if progress:
                    progress(i + 1, len(jobs))
    return sort_rows(rows, config.methods)
