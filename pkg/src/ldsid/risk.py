"""Risk functionals and the diagnostics built on them.

Three views of the same distance between a learned system and the truth:

* the impulse-response tail sum (time domain),
* the unit-circle transfer-function integral (frequency domain, normalized by
  1/(2 pi) so it equals the time-domain sum),
* the closed-form finite-horizon population risk, which reweights the first
  T-1 impulse terms by (1 - k/T) and adds the feedthrough gap and noise floor.

Plus the empirical partial loss used for training (zero initial state, early
outputs ignored) and probes for quasi-convexity, smoothness, and Monte-Carlo
agreement.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import lds
from .lds import SystemParams, Trajectory, impulse_response, spectral_radius, transfer_eval
from .poly import char_poly, circle_grid

#: Stability margin: largest admissible root magnitude for infinite-horizon risks.
STABILITY_MARGIN = 1e-6


def truncation_horizon(
    rho: float, n: int, tol: float = 1e-10, tau1: float = 0.1
) -> tuple[int, float]:
    """Smallest K with ``rho^(2K) n / ((1 - rho^2) tau1^2) < tol``, plus that bound."""
    if rho >= 1.0:
        raise ValueError("divergent idealized risk: spectral radius >= 1")
    if rho <= 0.0:
        return n + 1, 0.0
    scale = n / ((1.0 - rho**2) * tau1**2)
    if scale < tol:
        K = 1
    else:
        K = int(math.ceil(math.log(tol / scale) / (2.0 * math.log(rho)))) + 1
        K = max(K, n + 1)
    return K, scale * rho ** (2 * K)


def _check_stable(*systems: SystemParams) -> float:
    rho = max(spectral_radius(s) for s in systems)
    if rho > 1.0 - STABILITY_MARGIN:
        raise ValueError(f"divergent idealized risk: spectral radius {rho:.8g}")
    return rho


def idealized_risk_time(
    est: SystemParams, true_: SystemParams, horizon: int | None = None, tol: float = 1e-10
) -> float:
    """Truncated impulse-response distance ``sum_k ||C' A'^k B - C A^k B||_F^2``.

    The horizon is auto-extended until the geometric tail bound drops below
    ``tol``; both systems must be stable.
    """
    rho = _check_stable(est, true_)
    if horizon is None:
        horizon, _ = truncation_horizon(rho, max(est.n, true_.n), tol)
    r_est = impulse_response(est, horizon)
    r_true = impulse_response(true_, horizon)
    return float(np.sum((r_est - r_true) ** 2))


def idealized_risk_freq(est: SystemParams, true_: SystemParams, M: int = 4096) -> float:
    """Frequency-domain version: mean of ``|G_est - G_true|_F^2`` over a circle grid.

    Normalized with the 1/(2 pi) factor so it equals the time-domain sum.
    """
    if M < 512:
        raise ValueError("frequency grid must have at least 512 points")
    _check_stable(est, true_)
    z = circle_grid(M)
    diff = transfer_eval(est, z) - transfer_eval(true_, z)
    return float(np.mean(np.sum(np.abs(diff) ** 2, axis=(1, 2))))


def population_risk_closed(
    est: SystemParams, true_: SystemParams, T: int, sigma: float
) -> float:
    """Exact expected per-step squared error on length-T sequences.

    ``|D' - D|_F^2 + sum_{k=1}^{T-1} (1 - k/T) ||C' A'^(k-1) B - C A^(k-1) B||_F^2``
    plus the noise floor ``sigma^2 * l_out`` (one sigma^2 per output channel).
    Inputs are unit-variance white; the initial state is shared by the two
    systems (zero in all sampling here).
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    total = float(np.sum((est.D - true_.D) ** 2))
    if T > 1:
        r_est = impulse_response(est, T - 1)
        r_true = impulse_response(true_, T - 1)
        k = np.arange(1, T)
        weights = 1.0 - k / T
        total += float(
            np.sum(weights * np.sum((r_est - r_true) ** 2, axis=(1, 2)))
        )
    return total + sigma**2 * true_.l_out


def longer_sequence_risk(
    est: SystemParams, true_: SystemParams, T_prime: int, sigma: float
) -> float:
    """Population risk evaluated at a different sequence length."""
    return population_risk_closed(est, true_, T_prime, sigma)


def default_cutoff(T: int) -> int:
    """Training cutoff T1 = floor(T/4)."""
    return T // 4


def empirical_partial_loss(
    est: SystemParams, traj: Trajectory, T1: int | None = None
) -> float:
    """Mean squared error over outputs after T1, simulating from a zero state.

    The zero initial state stands in for the unknown true one; ignoring the
    first T1 outputs makes the mismatch negligible for stable systems.
    """
    T = traj.T
    if T1 is None:
        T1 = default_cutoff(T)
    if not 0 <= T1 < T:
        raise ValueError(f"cutoff T1={T1} must satisfy 0 <= T1 < T={T}")
    sim = lds.simulate(est, traj.x)
    diff = sim.y[T1:] - traj.y[T1:]
    return float(np.sum(diff * diff) / (T - T1))


def mc_population_risk(
    est: SystemParams,
    true_: SystemParams,
    T: int,
    sigma: float,
    trials: int,
    seed: int = 0,
    jobs: int = 1,
) -> tuple[float, float]:
    """Monte-Carlo estimate of the population risk with zero initial states.

    Fresh unit-variance Gaussian inputs and scale-sigma output noise per trial;
    returns (mean, standard error). Trials are drawn in fixed-size chunks with
    per-chunk derived seeds, so the estimate does not depend on ``jobs``.
    """
    chunk_size = 512
    chunks = (trials + chunk_size - 1) // chunk_size
    sizes = [min(chunk_size, trials - i * chunk_size) for i in range(chunks)]

    def run_chunk(idx: int, size: int) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(idx,)))
        X = rng.standard_normal((size, T, true_.l_in))
        noise = sigma * rng.standard_normal((size, T, true_.l_out)) if sigma > 0 else 0.0
        y_true = _batch_outputs(true_, X) + noise
        y_est = _batch_outputs(est, X)
        return np.mean(np.sum((y_est - y_true) ** 2, axis=2), axis=1)

    if jobs <= 1 or chunks == 1:
        parts = [run_chunk(i, s) for i, s in enumerate(sizes)]
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=min(jobs, chunks)) as pool:
            parts = list(pool.map(run_chunk, range(chunks), sizes))
    errs = np.concatenate(parts)
    return float(errs.mean()), float(errs.std(ddof=1) / np.sqrt(len(errs)))


def _batch_outputs(system: SystemParams, X: np.ndarray) -> np.ndarray:
    """Noiseless outputs for a batch of input sequences (B, T, l_in), zero state."""
    B, T, l_in = X.shape
    n, l_out = system.n, system.l_out
    s = np.zeros((B, n, l_in))
    out = np.empty((B, T, l_out))
    C, D, a = system.C, system.D, system.a
    for t in range(T):
        out[:, t] = s.reshape(B, -1) @ C.T + X[:, t] @ D.T
        s = lds._advance(a, s, X[:, t])
    return out


def transfer_error_curve(
    est: SystemParams, true_: SystemParams, M: int = 512
) -> tuple[np.ndarray, np.ndarray]:
    """Angles and pointwise Frobenius gaps of the full transfer functions."""
    _check_stable(est, true_)
    theta = 2.0 * np.pi * np.arange(M) / M
    z = np.exp(1j * theta)
    diff = transfer_eval(est, z, include_feedthrough=True) - transfer_eval(
        true_, z, include_feedthrough=True
    )
    return theta, np.sqrt(np.sum(np.abs(diff) ** 2, axis=(1, 2)))


def transfer_grid_error(est: SystemParams, true_: SystemParams, M: int = 512) -> float:
    """Root-mean-square gap between the full transfer functions on a circle grid."""
    _, errs = transfer_error_curve(est, true_, M)
    return float(np.sqrt(np.mean(errs**2)))


def wqc_margin(a_true: np.ndarray, a_est: np.ndarray, M: int = 512) -> float:
    """Twice the grid minimum of Re(p_true(z)/p_est(z)) on the unit circle.

    A positive value certifies that gradient steps on the idealized risk make
    progress toward the truth at that rate (grid version of the
    quasi-convexity constant).
    """
    pt = char_poly(np.asarray(a_true, dtype=float))
    pe = char_poly(np.asarray(a_est, dtype=float))
    z = circle_grid(M)
    den = pe(z)
    if np.min(np.abs(den)) < 1e-12 * (2.0**pe.degree):
        raise ValueError("estimate pole on circle")
    return float(2.0 * np.min((pt(z) / den).real))


def _idealized_with_feedthrough(est: SystemParams, true_: SystemParams) -> float:
    return idealized_risk_time(est, true_) + float(np.sum((est.D - true_.D) ** 2))


def finite_diff_idealized_gradient(
    est: SystemParams,
    true_: SystemParams,
    step: float = 1e-5,
    include_feedthrough: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Central finite differences of the idealized risk at ``est``.

    Returns gradients with respect to (a, C, D); the D component is zero
    unless ``include_feedthrough`` adds the feedthrough gap term.
    """
    objective = _idealized_with_feedthrough if include_feedthrough else (
        lambda e, t: idealized_risk_time(e, t)
    )

    def with_params(a, C, D):
        return SystemParams(a, C, D)

    a0, C0, D0 = est.a.copy(), est.C.copy(), est.D.copy()
    g_a = np.zeros_like(a0)
    for i in range(len(a0)):
        for sign in (1.0, -1.0):
            a = a0.copy()
            a[i] += sign * step
            g_a[i] += sign * objective(with_params(a, C0, D0), true_)
    g_a /= 2 * step
    g_C = np.zeros_like(C0)
    it = np.nditer(C0, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        for sign in (1.0, -1.0):
            C = C0.copy()
            C[idx] += sign * step
            g_C[idx] += sign * objective(with_params(a0, C, D0), true_)
    g_C /= 2 * step
    g_D = np.zeros_like(D0)
    if include_feedthrough:
        it = np.nditer(D0, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            for sign in (1.0, -1.0):
                D = D0.copy()
                D[idx] += sign * step
                g_D[idx] += sign * objective(with_params(a0, C0, D), true_)
        g_D /= 2 * step
    return g_a, g_C, g_D


def wqc_inequality_probe(
    est: SystemParams,
    true_: SystemParams,
    grad_fn=None,
    M: int = 512,
) -> tuple[float, float]:
    """Both sides of the progress inequality for the idealized risk.

    Returns (lhs, rhs) with lhs = <grad g, theta_est - theta_true> over the
    (a, C) coordinates and rhs = margin * (g(est) - 0); callers assert
    lhs >= rhs when the margin is positive. ``grad_fn(est, true_)`` may supply
    an analytic gradient; the default is central finite differences.
    """
    if grad_fn is None:
        g_a, g_C, _ = finite_diff_idealized_gradient(est, true_)
    else:
        g_a, g_C = grad_fn(est, true_)
    lhs = float(g_a @ (est.a - true_.a) + np.sum(g_C * (est.C - true_.C)))
    margin = wqc_margin(true_.a, est.a, M)
    rhs = margin * idealized_risk_time(est, true_)
    return lhs, rhs


@dataclass(frozen=True)
class RiskReport:
    """Bundle of the risk views for one (estimate, truth) pair."""

    idealized: float
    population: float
    empirical: float
    d_term: float
    tail_bound: float

    def to_json(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def risk_report(
    est: SystemParams,
    true_: SystemParams,
    T: int,
    sigma: float,
    traj: Trajectory | None = None,
) -> RiskReport:
    rho = _check_stable(est, true_)
    horizon, tail = truncation_horizon(rho, max(est.n, true_.n))
    return RiskReport(
        idealized=idealized_risk_time(est, true_, horizon),
        population=population_risk_closed(est, true_, T, sigma),
        empirical=empirical_partial_loss(est, traj) if traj is not None else float("nan"),
        d_term=float(np.sum((est.D - true_.D) ** 2)),
        tail_bound=tail,
    )
