"""Synthetic datasets with known spectra for benchmarking the solvers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SnapshotMatrix


@dataclass(frozen=True)
class ToySpec:
    """Three-mode benchmark field on the unit square of space x time.

    f(x, t) = sin(x) e^{-2t} + cos(x) e^{it} + tanh(x) e^{t} + sigma * noise,
    complex-valued through the oscillatory term, with i.i.d. Gaussian noise of
    standard deviation sigma added independently to real and imaginary parts.
    """

    n: int = 128
    m: int = 100
    sigma: float = 0.0
    x_range: tuple[float, float] = (0.0, 1.0)
    t_range: tuple[float, float] = (0.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.n < 2 or self.m < 2:
            raise ValueError("need n >= 2 and m >= 2")


TOY_OMEGAS = np.array([-2.0 + 0.0j, 0.0 + 1.0j, 1.0 + 0.0j])


def toy_dataset(spec: ToySpec, real: bool = False):
    """Generate the three-mode dataset.

    Returns (data, truth, true_omegas) with truth the noise-free field.
    With ``real=True`` only the real part is kept (the oscillation then folds
    into a conjugate pair, so the effective rank is 4 and the true spectrum
    is {-2, +i, -i, 1}); noise is then real with the same sigma per entry.
    """
    x = np.linspace(*spec.x_range, spec.n)
    t = np.linspace(*spec.t_range, spec.m)
    modes = np.stack([np.sin(x), np.cos(x), np.tanh(x)], axis=1)
    dynamics = np.exp(np.outer(TOY_OMEGAS, t))
    clean = modes @ dynamics

    rng = np.random.default_rng(spec.seed)
    if real:
        clean = clean.real
        noise = spec.sigma * rng.standard_normal((spec.n, spec.m))
        true_omegas = np.array([-2.0 + 0.0j, 1.0j, -1.0j, 1.0 + 0.0j])
    else:
        noise = spec.sigma * (rng.standard_normal((spec.n, spec.m))
                              + 1j * rng.standard_normal((spec.n, spec.m)))
        true_omegas = TOY_OMEGAS.copy()
    return (SnapshotMatrix(clean + noise, t),
            SnapshotMatrix(clean, t),
            true_omegas)


def _gaussian_bump(grid_x, grid_y, center, width=0.18):
    return np.exp(-((grid_x - center[0]) ** 2 + (grid_y - center[1]) ** 2)
                  / (2.0 * width**2))


def oscillator_surrogate(n_x: int, n_y: int, m: int, frequencies, decay,
                         sigma: float, seed: int,
                         t_range: tuple[float, float] = (0.0, 1.0)):
    """Real-valued 2-D field of damped/neutral oscillators on Gaussian bumps.

    Each nonzero frequency f_j with decay d_j contributes the conjugate mode
    pair d_j +- i f_j (spatial patterns: two Gaussian bumps at seeded random
    centers, one on the cosine and one on the sine); a zero frequency
    contributes the single real mode d_j. Gaussian noise of standard deviation
    sigma is added per entry. Returns (data, truth, true_omegas).
    """
    frequencies = np.asarray(frequencies, dtype=float)
    decay = np.asarray(decay, dtype=float)
    if frequencies.shape != decay.shape:
        raise ValueError("frequencies and decay must have equal length")
    if not (np.all(np.isfinite(frequencies)) and np.all(np.isfinite(decay))):
        raise ValueError("frequencies and decay must be finite")

    rng = np.random.default_rng(seed)
    gx, gy = np.meshgrid(np.linspace(0, 1, n_x), np.linspace(0, 1, n_y),
                         indexing="ij")
    t = np.linspace(*t_range, m)

    truth = np.zeros((n_x * n_y, m))
    omegas = []
    for freq, rate in zip(frequencies, decay):
        envelope = np.exp(rate * t)
        bump_a = _gaussian_bump(gx, gy, rng.uniform(0.15, 0.85, size=2)).ravel()
        if freq == 0.0:
            truth += np.outer(bump_a, envelope)
            omegas.append(rate + 0.0j)
            continue
        bump_b = _gaussian_bump(gx, gy, rng.uniform(0.15, 0.85, size=2)).ravel()
        truth += np.outer(bump_a, envelope * np.cos(freq * t))
        truth += np.outer(bump_b, envelope * np.sin(freq * t))
        omegas.extend([rate + 1j * freq, rate - 1j * freq])

    data = truth + sigma * rng.standard_normal(truth.shape)
    return (SnapshotMatrix(data, t),
            SnapshotMatrix(truth, t),
            np.asarray(omegas, dtype=complex))


def add_sparse_outliers(values: np.ndarray, fraction: float, amplitude: float,
                        seed: int) -> np.ndarray:
    """Replace a random fraction of entries with +-amplitude spikes.

    A stylized corruption model (not additive Gaussian noise); useful for
    stress-testing rejection logic.
    """
    if not (0 <= fraction <= 1):
        raise ValueError("fraction must be in [0, 1]")
    out = np.array(values, copy=True)
    rng = np.random.default_rng(seed)
    count = int(round(fraction * out.size))
    flat = rng.choice(out.size, size=count, replace=False)
    signs = rng.choice([-1.0, 1.0], size=count)
    out.flat[flat] = signs * amplitude
    return out
