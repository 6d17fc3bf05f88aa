"""Monte-Carlo forecasting from ensemble statistics.

Model realizations are drawn around the ensemble means (modes held at their
mean, eigenvalues and amplitudes perturbed by independent Gaussians per
real/imaginary component), evaluated at the requested times, and reduced to a
mean trajectory with pointwise variance bands.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bop import EnsembleStatistics
from .core import DmdModel
from .errors import EigenvalueOverflow, ShapeMismatch
from .varpro import time_dynamics_matrix


@dataclass(frozen=True)
class Forecast:
    """Mean trajectory with pointwise variance over the model draws.

    ``variance`` is the sample variance of the real parts; the imaginary-part
    variance is kept alongside for complex-valued data.
    """

    times: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    variance_imag: np.ndarray
    draws: int

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        mean = np.asarray(self.mean, dtype=complex)
        var = np.asarray(self.variance, dtype=float)
        var_im = np.asarray(self.variance_imag, dtype=float)
        if mean.shape != var.shape or mean.shape != var_im.shape:
            raise ShapeMismatch("mean and variance shapes differ")
        if mean.shape[1] != times.size:
            raise ShapeMismatch("one mean column per time point required")
        if np.any(var < 0) or np.any(var_im < 0):
            raise ValueError("variances must be non-negative")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", var)
        object.__setattr__(self, "variance_imag", var_im)


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_model(stats: EnsembleStatistics, rng) -> DmdModel:
    """Draw one model realization: modes at their mean, Gaussian eigenvalues/amplitudes.

    Each eigenvalue and amplitude entry is perturbed independently in its real
    and imaginary part with the stored ensemble variances. Draw order is fixed
    (eigenvalue re, eigenvalue im, amplitude re, amplitude im) so a seeded
    generator reproduces the draw exactly.
    """
    rng = _as_generator(rng)
    r = stats.rank
    eig = (stats.eigenvalue_mean
           + rng.standard_normal(r) * np.sqrt(stats.eigenvalue_variance_real)
           + 1j * rng.standard_normal(r) * np.sqrt(stats.eigenvalue_variance_imag))
    amp = (stats.amplitude_mean
           + rng.standard_normal(r) * np.sqrt(stats.amplitude_variance_real)
           + 1j * rng.standard_normal(r) * np.sqrt(stats.amplitude_variance_imag))
    return DmdModel(stats.mode_mean, eig, amp)


def forecast(stats: EnsembleStatistics, times, draws: int, seed: int) -> Forecast:
    """Monte-Carlo forecast: mean and pointwise variance over ``draws`` realizations.

    Times may extend beyond the training window. A draw whose growth would
    overflow is rejected and redrawn (the per-draw RNG stream continues), up
    to 10 * draws attempts in total; clamping is never used because it would
    bias the mean. Deterministic given ``seed``: draw k uses the generator
    seeded with ``seed ^ k``.
    """
    if draws < 2:
        raise ValueError("need at least 2 draws")
    times = np.asarray(times, dtype=float)
    if not np.all(np.isfinite(times)):
        raise ValueError("times must be finite")

    zero_spread = not (np.any(stats.eigenvalue_variance_real)
                       or np.any(stats.eigenvalue_variance_imag)
                       or np.any(stats.amplitude_variance_real)
                       or np.any(stats.amplitude_variance_imag))
    if zero_spread:
        # Degenerate distribution: every draw is the mean model.
        mean = _evaluate(stats.mean_model(), times)
        zeros = np.zeros(mean.shape, dtype=float)
        return Forecast(times, mean, zeros, zeros.copy(), draws)

    samples = np.empty((draws, stats.n, times.size), dtype=complex)
    attempts = 0
    budget = 10 * draws
    for k in range(draws):
        rng = np.random.default_rng(seed ^ k)
        while True:
            attempts += 1
            if attempts > budget:
                raise EigenvalueOverflow(
                    f"exceeded {budget} draw attempts; ensemble spread drives "
                    "the dynamics past the overflow guard at these times"
                )
            model = sample_model(stats, rng)
            try:
                samples[k] = _evaluate(model, times)
            except EigenvalueOverflow:
                continue
            break

    return Forecast(
        times=times,
        mean=samples.mean(axis=0),
        variance=samples.real.var(axis=0, ddof=1),
        variance_imag=samples.imag.var(axis=0, ddof=1),
        draws=draws,
    )


def _evaluate(model: DmdModel, times: np.ndarray) -> np.ndarray:
    dynamics = time_dynamics_matrix(model.eigenvalues, times)
    return model.modes @ (model.amplitudes[:, None] * dynamics)


def coverage_fraction(fc: Forecast, truth, n_sigma: float) -> float:
    """Fraction of entries whose true real part lies inside the n-sigma band."""
    truth = np.asarray(truth)
    if truth.shape != fc.mean.shape:
        raise ShapeMismatch(f"truth shape {truth.shape} vs forecast {fc.mean.shape}")
    if n_sigma <= 0:
        raise ValueError("n_sigma must be > 0")
    band = n_sigma * np.sqrt(fc.variance)
    inside = np.abs(truth.real - fc.mean.real) <= band
    return float(inside.mean())
