"""Snapshot containers, truncated SVD plumbing, and the exact-DMD regression.

The central objects are :class:`SnapshotMatrix` (state samples over time),
:class:`DmdModel` (modes, continuous-time eigenvalues, amplitudes), and
:func:`exact_dmd`, the least-squares propagator fit on snapshot pairs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateEigenproblem,
    InvalidRank,
    NonUniformSampling,
    RankDeficiencyWarning,
    RankTooLarge,
    ShapeMismatch,
    ZeroReference,
)

UNIFORM_RTOL = 1e-8
RANK_DEFICIENCY_CUTOFF = 1e-12


def _frozen(arr: np.ndarray, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SnapshotMatrix:
    """State samples arranged column-wise: ``values[:, k]`` is the state at ``times[k]``.

    ``values`` is n (space) x m (time) complex; ``times`` is strictly increasing,
    length m, in arbitrary units. Non-uniform spacing is allowed (only the exact-DMD
    path requires a single step size).
    """

    values: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values, complex)
        times = _frozen(self.times, float)
        if values.ndim != 2:
            raise ShapeMismatch(f"values must be 2-D, got shape {values.shape}")
        n, m = values.shape
        if n < 1 or m < 2:
            raise ShapeMismatch(f"need n >= 1 and m >= 2, got {n} x {m}")
        if times.shape != (m,):
            raise ShapeMismatch(
                f"times has length {times.shape}, expected ({m},) to match columns"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("snapshot values must be finite")
        if not np.all(np.isfinite(times)):
            raise ValueError("snapshot times must be finite")
        if not np.all(np.diff(times) > 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "times", times)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def spacing(self) -> float:
        """Mean time step."""
        return float((self.times[-1] - self.times[0]) / (self.m - 1))

    def is_uniform(self, rtol: float = UNIFORM_RTOL) -> bool:
        steps = np.diff(self.times)
        ref = steps.mean()
        return bool(np.max(np.abs(steps - ref)) <= rtol * ref)

    def take(self, indices) -> "SnapshotMatrix":
        """Sub-select columns (indices must be strictly increasing)."""
        idx = np.asarray(indices, dtype=int)
        return SnapshotMatrix(self.values[:, idx], self.times[idx])


@dataclass(frozen=True)
class DmdModel:
    """Rank-r decomposition x(t) = sum_j modes[:, j] * exp(eigenvalues[j] * t) * amplitudes[j].

    Canonical form (see :func:`normalize_components`): every mode column has unit
    Euclidean norm and its largest-magnitude entry is real and non-negative, with
    the remaining scale and phase folded into the amplitude.
    """

    modes: np.ndarray
    eigenvalues: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        modes = _frozen(self.modes, complex)
        eigenvalues = _frozen(self.eigenvalues, complex)
        amplitudes = _frozen(self.amplitudes, complex)
        if modes.ndim != 2:
            raise ShapeMismatch(f"modes must be 2-D, got shape {modes.shape}")
        r = modes.shape[1]
        if eigenvalues.shape != (r,) or amplitudes.shape != (r,):
            raise ShapeMismatch(
                "eigenvalues and amplitudes must have one entry per mode column"
            )
        if r > modes.shape[0]:
            raise InvalidRank(f"rank {r} exceeds spatial dimension {modes.shape[0]}")
        for name, arr in (("modes", modes), ("eigenvalues", eigenvalues),
                          ("amplitudes", amplitudes)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "eigenvalues", eigenvalues)
        object.__setattr__(self, "amplitudes", amplitudes)

    @property
    def rank(self) -> int:
        return self.modes.shape[1]

    @property
    def n(self) -> int:
        return self.modes.shape[0]

    @classmethod
    def from_components(cls, modes, eigenvalues, amplitudes) -> "DmdModel":
        """Build a model in canonical (unit-norm, phase-fixed) form."""
        phi, b = normalize_components(np.asarray(modes, dtype=complex),
                                      np.asarray(amplitudes, dtype=complex))
        return cls(phi, np.asarray(eigenvalues, dtype=complex), b)

    def normalized(self) -> "DmdModel":
        return DmdModel.from_components(self.modes, self.eigenvalues, self.amplitudes)

    def permuted(self, order) -> "DmdModel":
        """Reorder mode columns (and matching eigenvalues/amplitudes)."""
        order = np.asarray(order, dtype=int)
        return DmdModel(self.modes[:, order], self.eigenvalues[order],
                        self.amplitudes[order])


@dataclass(frozen=True)
class DiscreteOperatorSpectrum:
    """Spectral pieces of the reduced one-step propagator.

    ``discrete_eigenvalues`` are the eigenvalues of the r x r projected operator,
    ``reduced_eigenvectors`` its eigenvector matrix, and ``pod_basis`` /
    ``singular_values`` / ``right_vectors`` the rank-r SVD factors of the first
    snapshot block. ``eigenvector_condition`` is the condition number of the
    eigenvector matrix; large values flag near-degenerate eigenvalue clusters.
    """

    discrete_eigenvalues: np.ndarray
    reduced_eigenvectors: np.ndarray
    pod_basis: np.ndarray
    singular_values: np.ndarray
    right_vectors: np.ndarray
    eigenvector_condition: float = field(default=np.nan)

    def __post_init__(self):
        sv = np.asarray(self.singular_values, dtype=float)
        if np.any(sv < 0) or np.any(np.diff(sv) > 0):
            raise ValueError("singular values must be non-negative and non-increasing")


def normalize_components(modes: np.ndarray, amplitudes: np.ndarray):
    """Return (modes, amplitudes) with unit-norm, phase-fixed mode columns.

    For each column the Euclidean norm and the phase of its largest-magnitude
    entry are divided out and folded into the matching amplitude, so the product
    modes @ diag(amplitudes) is unchanged. Zero columns are left in place with a
    zero amplitude.
    """
    phi = np.array(modes, dtype=complex)
    b = np.array(amplitudes, dtype=complex)
    for j in range(phi.shape[1]):
        norm = np.linalg.norm(phi[:, j])
        if norm == 0.0:
            b[j] = 0.0
            continue
        peak = phi[np.argmax(np.abs(phi[:, j])), j]
        phase = peak / abs(peak)
        scale = norm * phase
        phi[:, j] /= scale
        b[j] *= scale
    return phi, b


def build_snapshot_pairs(data: SnapshotMatrix):
    """Split uniformly sampled data into the (current, one-step-ahead) column pair.

    Raises NonUniformSampling when the time grid deviates from a single step
    size by more than a relative 1e-8: one fixed step is what lets the discrete
    eigenvalues be mapped to continuous-time rates.
    """
    if not data.is_uniform():
        raise NonUniformSampling(
            "exact DMD needs uniformly spaced snapshots; "
            "use the optimized solver for arbitrary sample times"
        )
    return data.values[:, :-1], data.values[:, 1:]


def truncated_svd(X: np.ndarray, r: int):
    """Rank-r SVD factors (U_r, s_r, V_r) of X, singular values non-increasing.

    U_r is n x r, s_r the r largest singular values, V_r m x r, and
    U_r @ diag(s_r) @ V_r.conj().T is the best rank-r approximation in the
    Frobenius norm. Emits RankDeficiencyWarning when s_r / s_1 < 1e-12.
    """
    X = np.asarray(X)
    if not (1 <= r <= min(X.shape)):
        raise RankTooLarge(f"rank {r} not in [1, {min(X.shape)}] for shape {X.shape}")
    U, s, Vh = np.linalg.svd(X, full_matrices=False)
    if s[0] == 0.0 or s[r - 1] / s[0] < RANK_DEFICIENCY_CUTOFF:
        warnings.warn(
            f"matrix is numerically rank-deficient at rank {r} "
            f"(sigma_r/sigma_1 = {0.0 if s[0] == 0 else s[r - 1] / s[0]:.3e})",
            RankDeficiencyWarning,
            stacklevel=2,
        )
    return U[:, :r], s[:r], Vh[:r].conj().T


def suggest_rank(X: np.ndarray, energy: float = 0.9999) -> int:
    """Smallest rank capturing the given fraction of squared singular-value energy."""
    s = np.linalg.svd(np.asarray(X), compute_uv=False)
    total = np.sum(s**2)
    if total == 0.0:
        return 1
    frac = np.cumsum(s**2) / total
    return int(np.searchsorted(frac, energy) + 1)


def exact_dmd(data: SnapshotMatrix, r: int):
    """Least-squares one-step propagator fit, reduced to rank r.

    Returns the canonical DmdModel (continuous-time eigenvalues on the principal
    log branch, amplitudes from the first snapshot) together with the
    DiscreteOperatorSpectrum diagnostics.

    Frequencies above pi/dt alias onto the principal branch; the time step must
    resolve the fastest dynamics of interest.
    """
    X, Xp = build_snapshot_pairs(data)
    if not (1 <= r <= min(data.n, data.m - 1)):
        raise InvalidRank(
            f"rank {r} not in [1, min(n, m-1)] = [1, {min(data.n, data.m - 1)}]"
        )
    dt = data.spacing()
    U, s, V = truncated_svd(X, r)
    with np.errstate(divide="ignore"):
        sinv = np.where(s > 0, 1.0 / s, 0.0)
    reduced = U.conj().T @ Xp @ (V * sinv[None, :])
    try:
        lam, W = np.linalg.eig(reduced)
    except np.linalg.LinAlgError as exc:
        raise DegenerateEigenproblem(str(exc)) from exc
    modes = Xp @ (V * sinv[None, :]) @ W
    with np.errstate(divide="ignore", invalid="ignore"):
        omegas = np.log(lam.astype(complex)) / dt
    amplitudes = amplitudes_from_first_snapshot(modes, data.values[:, 0])
    model = DmdModel.from_components(modes, omegas, amplitudes)
    cond = float(np.linalg.cond(W))
    spectrum = DiscreteOperatorSpectrum(
        discrete_eigenvalues=lam,
        reduced_eigenvectors=W,
        pod_basis=U,
        singular_values=s,
        right_vectors=V,
        eigenvector_condition=cond,
    )
    return model, spectrum


def amplitudes_from_first_snapshot(modes: np.ndarray, x1: np.ndarray) -> np.ndarray:
    """Least-squares mode loadings: pseudo-inverse of the modes applied to x1.

    Singular values below a relative 1e-12 are zeroed out of the inverse
    (their contribution is dropped) with a RankDeficiencyWarning.
    """
    modes = np.asarray(modes, dtype=complex)
    x1 = np.asarray(x1, dtype=complex)
    if modes.shape[0] != x1.shape[0]:
        raise ShapeMismatch(
            f"modes have {modes.shape[0]} rows but x1 has {x1.shape[0]} entries"
        )
    U, s, Vh = np.linalg.svd(modes, full_matrices=False)
    if s[0] == 0.0:
        warnings.warn("all mode columns are zero", RankDeficiencyWarning, stacklevel=2)
        return np.zeros(modes.shape[1], dtype=complex)
    small = s / s[0] < RANK_DEFICIENCY_CUTOFF
    if np.any(small):
        warnings.warn(
            "mode matrix is rank deficient; dropping the smallest singular values",
            RankDeficiencyWarning,
            stacklevel=2,
        )
    sinv = np.where(small, 0.0, 1.0 / np.where(small, 1.0, s))
    return Vh.conj().T @ (sinv * (U.conj().T @ x1))


def reconstruct(model: DmdModel, times) -> np.ndarray:
    """Evaluate the model at the given times; column k is x(times[k])."""
    times = np.asarray(times, dtype=float)
    if not np.all(np.isfinite(times)):
        raise ValueError("times must be finite")
    dynamics = np.exp(np.outer(model.eigenvalues, times))
    return model.modes @ (model.amplitudes[:, None] * dynamics)


def relative_error(X: np.ndarray, Xhat: np.ndarray) -> float:
    """Frobenius-norm error of Xhat relative to X."""
    X = np.asarray(X)
    Xhat = np.asarray(Xhat)
    if X.shape != Xhat.shape:
        raise ShapeMismatch(f"shapes {X.shape} and {Xhat.shape} differ")
    ref = np.linalg.norm(X)
    if ref == 0.0:
        raise ZeroReference("reference matrix has zero Frobenius norm")
    return float(np.linalg.norm(X - Xhat) / ref)
