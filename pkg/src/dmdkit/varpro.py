"""Optimized DMD: direct exponential fitting by variable projection.

Minimizes ``||X - Phi_b @ T(omega)||_F`` over the continuous-time eigenvalues
``omega`` and the combined mode/amplitude matrix ``Phi_b``. The linear stage
(``Phi_b`` for fixed omega) is eliminated through the pseudo-inverse of the
time-dynamics matrix ``T``; a Levenberg-Marquardt loop then drives the 2r real
parameters (real and imaginary parts of omega).

The projected residual ``R(omega) = X (I - T^+ T)`` is not an analytic function
of the complex omegas (the orthogonal projector involves conjugations), so the
Jacobian is kept in real-direction form: separate derivative columns for the
real and imaginary part of every eigenvalue. Both projector terms of the
derivative are included, which makes the columns match central finite
differences to truncation order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from . import core
from .core import DmdModel, SnapshotMatrix
from .errors import EigenvalueOverflow, InvalidRank, NonUniformSampling, ShapeMismatch

EXP_OVERFLOW_LIMIT = 700.0  # exp argument beyond which float64 overflows
_LAMBDA_MAX = 1e15
_LAMBDA_MIN = 1e-14


class TerminationReason(Enum):
    GRADIENT_TOL = "gradient_tolerance"
    STEP_TOL = "step_tolerance"
    RESIDUAL_TOL = "residual_tolerance"
    MAX_ITERS = "max_iterations"
    DIVERGED = "diverged"


@dataclass(frozen=True)
class SolverConfig:
    """Levenberg-Marquardt knobs for the variable-projection solve.

    ``eigenvalue_real_cap`` bounds the growth rate a converged solution may
    report; ``None`` derives 8 / (t_last - t_first) from the data window, i.e.
    growth by e^8 over the observation span counts as divergence. When
    ``enforce_conjugate_pairs`` is set and the data are real, eigenvalues are
    symmetrized into conjugate pairs after convergence.
    """

    max_iterations: int = 200
    gradient_tolerance: float = 1e-8
    step_tolerance: float = 1e-10
    residual_tolerance: float = 1e-12
    marquardt_lambda_init: float = 1e-2
    marquardt_scale: float = 2.0
    pinv_threshold: float = 1e-12
    eigenvalue_real_cap: float | None = None
    enforce_conjugate_pairs: bool = False

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        for name in ("gradient_tolerance", "step_tolerance", "residual_tolerance",
                     "marquardt_lambda_init", "pinv_threshold"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.marquardt_scale <= 1:
            raise ValueError("marquardt_scale must be > 1")


@dataclass(frozen=True)
class ConvergenceReport:
    """Per-solve diagnostics; divergence is reported here, never raised."""

    converged: bool
    iterations: int
    final_cost: float
    gradient_norm: float
    termination_reason: TerminationReason

    def __post_init__(self):
        if self.final_cost < 0:
            raise ValueError("final_cost must be >= 0")


def time_dynamics_matrix(omegas, times) -> np.ndarray:
    """Matrix with entry (j, k) = exp(omegas[j] * times[k]).

    Raises EigenvalueOverflow when any Re(omega_j) * t_k exceeds 700, the
    edge of double-precision range.
    """
    omegas = np.asarray(omegas, dtype=complex)
    times = np.asarray(times, dtype=float)
    if not (np.all(np.isfinite(omegas)) and np.all(np.isfinite(times))):
        raise ValueError("omegas and times must be finite")
    growth = np.outer(omegas.real, times)
    if growth.size and growth.max() > EXP_OVERFLOW_LIMIT:
        raise EigenvalueOverflow(
            f"max Re(omega)*t = {growth.max():.1f} exceeds {EXP_OVERFLOW_LIMIT:.0f}"
        )
    return np.exp(np.outer(omegas, times))


def solve_linear_stage(X, T, pinv_threshold: float) -> np.ndarray:
    """Best Phi_b for fixed dynamics: X @ pinv(T), minimizing ||X - Phi_b T||_F.

    The pseudo-inverse drops singular values below ``pinv_threshold`` relative
    to the largest, so rank-deficient dynamics yield zero columns rather than
    noise amplification.
    """
    X = np.asarray(X, dtype=complex)
    T = np.asarray(T, dtype=complex)
    if X.shape[1] != T.shape[1]:
        raise ShapeMismatch(
            f"X has {X.shape[1]} columns but T has {T.shape[1]}"
        )
    return X @ np.linalg.pinv(T, rcond=pinv_threshold)


def varpro_cost(X, omegas, times, pinv_threshold: float):
    """Projected objective: (squared Frobenius residual, residual matrix)."""
    T = time_dynamics_matrix(omegas, times)
    phi_b = solve_linear_stage(X, T, pinv_threshold)
    residual = np.asarray(X, dtype=complex) - phi_b @ T
    return float(np.linalg.norm(residual) ** 2), residual


def varpro_jacobian(X, omegas, times, pinv_threshold: float) -> np.ndarray:
    """Derivatives of the flattened projected residual w.r.t. the 2r real parameters.

    Returns a complex (n*m) x 2r matrix: column j is the derivative of
    vec(R) (row-major) with respect to Re(omega_j), column r + j with respect
    to Im(omega_j). Uses the full projected-residual derivative

        dR/ds = -[Phi_b[:, j] (Q^T d_j)^T + (R conj(d_j)) conj(T^+[:, j])^T]    (s = Re)
        dR/ds = -i[first term - second term]                                    (s = Im)

    with d_j = t * exp(omega_j t) and Q = I - T^+ T; both projector terms are
    kept so each column matches its central finite difference.
    """
    X = np.asarray(X, dtype=complex)
    omegas = np.asarray(omegas, dtype=complex)
    times = np.asarray(times, dtype=float)
    n, m = X.shape
    r = omegas.size
    T = time_dynamics_matrix(omegas, times)
    Tp = np.linalg.pinv(T, rcond=pinv_threshold)
    phi_b = X @ Tp
    R = X - phi_b @ T
    D = T * times[None, :]            # row j = d_j^T
    W = D - (D @ Tp) @ T              # row j = (Q^T d_j)^T
    Rd = R @ np.conj(D).T             # column j = R conj(d_j)
    Tp_conj = np.conj(Tp)
    jac = np.empty((n * m, 2 * r), dtype=complex)
    for j in range(r):
        g1 = np.outer(phi_b[:, j], W[j, :])
        g2 = np.outer(Rd[:, j], Tp_conj[:, j])
        jac[:, j] = -(g1 + g2).ravel()
        jac[:, r + j] = (-1j * (g1 - g2)).ravel()
    return jac


def _real_normal_system(jac: np.ndarray, residual: np.ndarray):
    """Gradient and normal matrix of the equivalent real least-squares problem."""
    rvec = residual.ravel()
    grad = np.real(jac.conj().T @ rvec)
    normal = np.real(jac.conj().T @ jac)
    return grad, normal


def _wrap_to_band(values: np.ndarray, half_width: float) -> np.ndarray:
    """Fold values into (-half_width, half_width]."""
    return -(np.mod(half_width - values, 2.0 * half_width) - half_width)


def _lm_minimize(X, times, omega0, config: SolverConfig,
                 nyquist: float | None = None, real_floor: float | None = None):
    """Damped normal-equation iteration on the 2r real eigenvalue parameters.

    On uniformly sampled data the objective is periodic in Im(omega) with
    period 2*pi/dt (grid aliasing), so accepted iterates are folded back into
    the principal band (``nyquist`` = pi/dt); the fold is exactly
    cost-invariant there. ``real_floor`` rejects steps whose decay rate leaves
    the identifiable range (the mode would be numerically zero over the
    window, a classic runaway direction of the projected objective).
    """
    scale = float(np.linalg.norm(X)) ** 2
    resid_floor = config.residual_tolerance * scale
    omega = np.array(omega0, dtype=complex)
    r = omega.size

    try:
        cost, residual = varpro_cost(X, omega, times, config.pinv_threshold)
    except EigenvalueOverflow:
        return omega, ConvergenceReport(False, 0, np.inf, np.inf,
                                        TerminationReason.DIVERGED)

    if cost <= resid_floor:
        return omega, ConvergenceReport(True, 0, cost, 0.0,
                                        TerminationReason.RESIDUAL_TOL)

    lam = config.marquardt_lambda_init
    iterations = 0
    grad_norm = np.inf
    converged = False
    reason = TerminationReason.MAX_ITERS

    while iterations < config.max_iterations:
        jac = varpro_jacobian(X, omega, times, config.pinv_threshold)
        grad, normal = _real_normal_system(jac, residual)
        grad_norm = float(np.linalg.norm(grad))
        if np.max(np.abs(grad)) <= config.gradient_tolerance:
            converged = True
            reason = TerminationReason.GRADIENT_TOL
            break
        iterations += 1

        diag = np.diag(normal).copy()
        diag_floor = 1e-12 * max(diag.max(), 1.0)
        diag = np.maximum(diag, diag_floor)

        accepted = False
        while lam <= _LAMBDA_MAX:
            damped = normal + lam * np.diag(diag)
            try:
                delta = np.linalg.solve(damped, -grad)
            except np.linalg.LinAlgError:
                delta = np.linalg.lstsq(damped, -grad, rcond=None)[0]
            if not np.all(np.isfinite(delta)):
                lam *= config.marquardt_scale
                continue
            trial = omega + delta[:r] + 1j * delta[r:]
            if real_floor is not None and np.min(trial.real) < real_floor:
                lam *= config.marquardt_scale
                continue
            try:
                trial_cost, trial_residual = varpro_cost(
                    X, trial, times, config.pinv_threshold)
            except EigenvalueOverflow:
                lam *= config.marquardt_scale
                continue
            if trial_cost < cost:
                if nyquist is not None:
                    trial = trial.real + 1j * _wrap_to_band(trial.imag, nyquist)
                omega, cost, residual = trial, trial_cost, trial_residual
                lam = max(lam / config.marquardt_scale, _LAMBDA_MIN)
                accepted = True
                step_norm = float(np.linalg.norm(delta))
                param_norm = float(np.linalg.norm(
                    np.concatenate([omega.real, omega.imag])))
                if cost <= resid_floor:
                    converged = True
                    reason = TerminationReason.RESIDUAL_TOL
                elif step_norm <= config.step_tolerance * (param_norm
                                                           + config.step_tolerance):
                    converged = True
                    reason = TerminationReason.STEP_TOL
                break
            lam *= config.marquardt_scale

        if not accepted:
            reason = TerminationReason.DIVERGED
            break
        if converged:
            break

    report = ConvergenceReport(converged, iterations, cost, grad_norm, reason)
    return omega, report


def _pair_conjugates(omegas: np.ndarray) -> np.ndarray:
    """Symmetrize eigenvalues into conjugate pairs by optimal matching."""
    from scipy.optimize import linear_sum_assignment

    r = omegas.size
    cost = np.abs(omegas[:, None] - np.conj(omegas)[None, :])
    _, partner = linear_sum_assignment(cost)
    out = omegas.copy()
    done = np.zeros(r, dtype=bool)
    for i in range(r):
        j = partner[i]
        if done[i] or done[j]:
            continue
        if j == i:
            out[i] = omegas[i].real
            done[i] = True
        else:
            w = 0.5 * (omegas[i] + np.conj(omegas[j]))
            out[i], out[j] = w, np.conj(w)
            done[i] = done[j] = True
    return out


def _longest_uniform_run(times: np.ndarray, rtol: float = core.UNIFORM_RTOL):
    """(start, n_points) of the longest stretch of equally spaced samples."""
    steps = np.diff(times)
    best_start, best_len = 0, 2
    run_start = 0
    for k in range(1, steps.size):
        if abs(steps[k] - steps[run_start]) > rtol * steps[run_start]:
            run_len = k - run_start + 1
            if run_len > best_len:
                best_start, best_len = run_start, run_len
            run_start = k
    run_len = steps.size - run_start + 1
    if run_len > best_len:
        best_start, best_len = run_start, run_len
    return best_start, best_len


def initialize_eigenvalues(data: SnapshotMatrix, r: int) -> np.ndarray:
    """Seed eigenvalues from an exact-DMD fit, sanitized for optimization.

    Uniformly sampled data are fit whole. Otherwise the longest uniformly
    spaced run of snapshots is used (it shares the underlying dynamics), which
    needs at least r + 1 consecutive samples.

    Under noise the exact-DMD spectrum grows rogue components (the log of a
    tiny noisy singular direction gives decay rates in the hundreds), which
    strand the nonlinear solve in noise-fitting minima. Components whose decay
    rate falls outside the identifiable range (|Re| > 8 / window) are restarted
    neutrally near zero with small distinct frequencies, and frequencies are
    folded into the principal aliasing band of the sampling grid.
    """
    if data.is_uniform():
        model, _ = core.exact_dmd(data, r)
        fit_data = data
    else:
        start, length = _longest_uniform_run(data.times)
        if length < r + 1:
            raise NonUniformSampling(
                f"no uniform run of at least {r + 1} snapshots to seed from; "
                "pass init_omegas explicitly"
            )
        fit_data = data.take(np.arange(start, start + length))
        model, _ = core.exact_dmd(fit_data, r)

    omegas = model.eigenvalues.copy()
    omegas = omegas.real + 1j * _wrap_to_band(omegas.imag, np.pi / fit_data.spacing())
    window = float(data.times[-1] - data.times[0])
    bound = 8.0 / window
    bad = np.abs(omegas.real) > bound
    if np.any(bad):
        k = np.arange(np.count_nonzero(bad), dtype=float)
        omegas[bad] = 1j * (k - k.mean()) * (0.5 / window)
    return omegas


def optimized_dmd(data: SnapshotMatrix, r: int, init_omegas=None,
                  config: SolverConfig | None = None):
    """Variable-projection DMD fit; returns (DmdModel, ConvergenceReport).

    Handles snapshots collected at arbitrary times. A failed solve comes back
    as a non-converged report (termination_reason tells why) so ensemble
    callers can reject trials instead of catching exceptions.
    """
    if config is None:
        config = SolverConfig()
    if not (1 <= r <= min(data.n, data.m)):
        raise InvalidRank(f"rank {r} not in [1, min(n, m)] = [1, {min(data.n, data.m)}]")

    window = float(data.times[-1] - data.times[0])
    real_cap = config.eigenvalue_real_cap
    if real_cap is None:
        real_cap = 8.0 / window
    # Decay by more than e^8 over the window is numerically a missing mode;
    # keep the iterates (and any derived seed) out of that dead zone.
    real_floor = -8.0 / window
    nyquist = np.pi / data.spacing() if data.is_uniform() else None

    if init_omegas is None:
        omega0 = initialize_eigenvalues(data, r)
    else:
        omega0 = np.asarray(init_omegas, dtype=complex)
        if omega0.shape != (r,):
            raise InvalidRank(f"init_omegas must have length {r}")
    # Never strand a caller-supplied start below the floor.
    real_floor = min(real_floor, float(omega0.real.min()))

    X = data.values
    omega, report = _lm_minimize(X, data.times, omega0, config,
                                 nyquist=nyquist, real_floor=real_floor)

    if np.max(omega.real) > real_cap:
        report = replace(report, converged=False,
                         termination_reason=TerminationReason.DIVERGED)

    if config.enforce_conjugate_pairs and np.all(X.imag == 0.0):
        omega = _pair_conjugates(omega)

    try:
        T = time_dynamics_matrix(omega, data.times)
        phi_b = solve_linear_stage(X, T, config.pinv_threshold)
    except EigenvalueOverflow:
        # Unfittable dynamics at the final iterate: surface a zero model.
        phi_b = np.zeros((data.n, r), dtype=complex)
        report = replace(report, converged=False,
                         termination_reason=TerminationReason.DIVERGED)
    model = DmdModel.from_components(phi_b, omega, np.ones(r, dtype=complex))
    return model, report
