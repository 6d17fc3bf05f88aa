"""Bagged ensembles of optimized-DMD fits with mean/variance statistics.

A base model fit on the full snapshot set seeds per-trial solves on random
snapshot subsets. Converged, non-exploding trials are aligned to the base
model (eigenvalue assignment) and aggregated into elementwise means and
real/imaginary-part variances of the modes, eigenvalues, and amplitudes.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import DmdModel, SnapshotMatrix, normalize_components
from .errors import InsufficientModels, InvalidBagSize, ShapeMismatch, TooFewAcceptedTrials
from .varpro import SolverConfig, optimized_dmd


@dataclass(frozen=True)
class BagConfig:
    """Bagging parameters.

    ``p`` snapshots per bag, ``trials`` ensemble members, up to ``max_redraws``
    fresh bags per trial when a fit is rejected. ``rejection_real_cap`` bounds
    the growth rate an accepted trial may have (None derives 2 / data window:
    growth by e^2 over the observed span is treated as a divergence artifact).
    ``freeze_seed`` keeps every trial seeded at the base model instead of
    chaining the last accepted eigenvalues; it is also the mode that allows
    parallel trials. ``with_replacement`` switches to classical bootstrap
    draws; duplicate snapshot indices are collapsed before fitting because
    repeated sample times make the exponential basis rank-degenerate.
    """

    p: int
    trials: int
    base_seed: int
    max_redraws: int = 3
    rejection_real_cap: float | None = None
    freeze_seed: bool = False
    with_replacement: bool = False

    def __post_init__(self):
        if self.p < 2:
            raise InvalidBagSize(f"bag size p={self.p} must be >= 2")
        if self.trials < 2:
            raise ValueError("need at least 2 trials")
        if self.max_redraws < 0:
            raise ValueError("max_redraws must be >= 0")
        if self.base_seed < 0:
            raise ValueError("base_seed must be a non-negative integer")


@dataclass(frozen=True)
class EnsembleStatistics:
    """Elementwise ensemble moments of aligned trial models.

    Variances are sample variances (divisor K-1) of the real and imaginary
    parts separately; ``mode_mean`` is re-normalized to the canonical
    unit-norm/phase convention after averaging.
    """

    mode_mean: np.ndarray
    mode_variance_real: np.ndarray
    mode_variance_imag: np.ndarray
    eigenvalue_mean: np.ndarray
    eigenvalue_variance_real: np.ndarray
    eigenvalue_variance_imag: np.ndarray
    amplitude_mean: np.ndarray
    amplitude_variance_real: np.ndarray
    amplitude_variance_imag: np.ndarray
    accepted_trials: int
    rejected_trials: int

    def __post_init__(self):
        if self.accepted_trials < 2:
            raise InsufficientModels("ensemble statistics need >= 2 accepted trials")
        if self.rejected_trials < 0:
            raise ValueError("rejected_trials must be >= 0")
        for name in ("mode_variance_real", "mode_variance_imag",
                     "eigenvalue_variance_real", "eigenvalue_variance_imag",
                     "amplitude_variance_real", "amplitude_variance_imag"):
            if np.any(np.asarray(getattr(self, name)) < 0):
                raise ValueError(f"{name} must be non-negative")

    @property
    def rank(self) -> int:
        return self.mode_mean.shape[1]

    @property
    def n(self) -> int:
        return self.mode_mean.shape[0]

    def mean_model(self) -> DmdModel:
        return DmdModel(self.mode_mean, self.eigenvalue_mean, self.amplitude_mean)


def sample_bag(m: int, p: int, rng: np.random.Generator,
               with_replacement: bool = False) -> np.ndarray:
    """Draw p of m snapshot indices, sorted ascending to preserve time order."""
    if not (1 <= p < m):
        raise InvalidBagSize(f"bag size p={p} must satisfy 1 <= p < m={m}")
    if with_replacement:
        idx = rng.integers(0, m, size=p)
    else:
        idx = rng.choice(m, size=p, replace=False)
    return np.sort(idx)


def align_to_reference(model: DmdModel, reference: DmdModel) -> DmdModel:
    """Permute model columns so eigenvalues pair off with the reference's.

    Uses the minimum-total-|omega - omega_ref| assignment, so near-swaps that
    fool greedy nearest-neighbor matching are still resolved globally.
    """
    if model.rank != reference.rank:
        raise ShapeMismatch(
            f"ranks differ: {model.rank} vs {reference.rank}")
    cost = np.abs(model.eigenvalues[:, None] - reference.eigenvalues[None, :])
    rows, cols = linear_sum_assignment(cost)
    order = np.empty(model.rank, dtype=int)
    order[cols] = rows
    return model.permuted(order).normalized()


def ensemble_statistics(models, rejected_trials: int = 0) -> EnsembleStatistics:
    """Elementwise sample mean and per-component variance over aligned models."""
    models = list(models)
    if len(models) < 2:
        raise InsufficientModels(f"got {len(models)} models, need >= 2")
    shape = models[0].modes.shape
    for mdl in models[1:]:
        if mdl.modes.shape != shape:
            raise ShapeMismatch("all models must share the same n x r shape")
    modes = np.stack([mdl.modes for mdl in models])
    eigs = np.stack([mdl.eigenvalues for mdl in models])
    amps = np.stack([mdl.amplitudes for mdl in models])

    mode_mean, _ = normalize_components(modes.mean(axis=0),
                                        np.ones(shape[1], dtype=complex))
    return EnsembleStatistics(
        mode_mean=mode_mean,
        mode_variance_real=modes.real.var(axis=0, ddof=1),
        mode_variance_imag=modes.imag.var(axis=0, ddof=1),
        eigenvalue_mean=eigs.mean(axis=0),
        eigenvalue_variance_real=eigs.real.var(axis=0, ddof=1),
        eigenvalue_variance_imag=eigs.imag.var(axis=0, ddof=1),
        amplitude_mean=amps.mean(axis=0),
        amplitude_variance_real=amps.real.var(axis=0, ddof=1),
        amplitude_variance_imag=amps.imag.var(axis=0, ddof=1),
        accepted_trials=len(models),
        rejected_trials=rejected_trials,
    )


def _run_trial(data, r, bag, solver, seed_omegas, reference, trial, cap):
    """One bagging trial: draw, fit, gate, align. Returns (model | None, rejections)."""
    rng = np.random.default_rng(bag.base_seed ^ trial)
    rejections = 0
    for _ in range(bag.max_redraws + 1):
        idx = sample_bag(data.m, bag.p, rng, bag.with_replacement)
        if bag.with_replacement:
            idx = np.unique(idx)
        sub = data.take(idx)
        model, report = optimized_dmd(sub, r, init_omegas=seed_omegas, config=solver)
        if report.converged and np.max(model.eigenvalues.real) <= cap:
            return align_to_reference(model, reference), rejections
        rejections += 1
    return None, rejections


def bop_dmd(data: SnapshotMatrix, r: int, bag: BagConfig,
            solver: SolverConfig | None = None, threads: int = 1):
    """Bagging ensemble of optimized-DMD fits.

    Fits a base model on the full data, then ``bag.trials`` solves on random
    p-column subsets, each seeded with the running eigenvalue estimate (or the
    base model's when ``freeze_seed``). Trials that fail to converge or exceed
    the growth cap are redrawn up to ``max_redraws`` times, then dropped.
    Returns (EnsembleStatistics, list of accepted aligned DmdModel).

    ``threads > 1`` runs trials concurrently and requires ``freeze_seed``
    (the chained seed update is inherently sequential); outputs are identical
    for any thread count because per-trial RNG streams are derived from
    ``base_seed ^ trial`` and results are reduced in trial order.
    """
    if solver is None:
        solver = SolverConfig()
    if bag.p >= data.m:
        raise InvalidBagSize(f"bag size p={bag.p} must be < m={data.m}")
    if threads > 1 and not bag.freeze_seed:
        raise ValueError("parallel trials require freeze_seed=True")

    cap = bag.rejection_real_cap
    if cap is None:
        cap = 2.0 / (data.times[-1] - data.times[0])

    base_model, _ = optimized_dmd(data, r, init_omegas=None, config=solver)

    accepted: list[DmdModel] = []
    rejected = 0
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(_run_trial, data, r, bag, solver,
                            base_model.eigenvalues, base_model, trial, cap)
                for trial in range(bag.trials)
            ]
            results = [f.result() for f in futures]
    else:
        results = []
        seed_omegas = base_model.eigenvalues
        for trial in range(bag.trials):
            model, rejections = _run_trial(data, r, bag, solver, seed_omegas,
                                           base_model, trial, cap)
            results.append((model, rejections))
            if model is not None and not bag.freeze_seed:
                seed_omegas = model.eigenvalues

    for model, rejections in results:
        rejected += rejections
        if model is not None:
            accepted.append(model)

    if len(accepted) < 2:
        raise TooFewAcceptedTrials(
            f"only {len(accepted)} of {bag.trials} trials accepted "
            f"({rejected} rejections); enlarge p, relax the cap, or add redraws"
        )
    return ensemble_statistics(accepted, rejected_trials=rejected), accepted
