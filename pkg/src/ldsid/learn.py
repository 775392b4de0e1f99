"""Gradient computation, projected SGD training, and estimator diagnostics.

The training loss for one sample is the partial squared error: simulate the
estimate from a zero initial state and average ``||y_sim - y||^2`` over the
outputs after the cutoff T1 (default T/4). Gradients are computed by
back-propagation through the companion-structured recursion in O(T n) time and
match central finite differences of that loss; the descent update is
``theta <- theta - eta * g``. After every step the characteristic coefficients
are projected back onto the configured half-space polytope.

The per-sample gradient is an (almost) unbiased estimate of the gradient of
the infinite-horizon risk, with variance decaying like 1/T; the probes at the
bottom measure both properties directly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import chain
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import risk as risk_mod
from .acq import AcqPolytope, project
from .lds import SystemParams, Trajectory, _advance, _advance_adjoint


@dataclass(frozen=True, eq=False)
class GradientTriple:
    """Descent gradient with respect to (a, C, D)."""

    g_a: np.ndarray
    g_C: np.ndarray
    g_D: np.ndarray

    def norm(self) -> float:
        return float(
            np.sqrt(
                np.sum(self.g_a**2) + np.sum(self.g_C**2) + np.sum(self.g_D**2)
            )
        )

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.g_a))
            and np.all(np.isfinite(self.g_C))
            and np.all(np.isfinite(self.g_D))
        )


def _batch_gradients(system: SystemParams, X: np.ndarray, Y: np.ndarray, T1: int):
    """Loss gradients for a batch of trajectories.

    X is (B, T, l_in), Y is (B, T, l_out); returns per-trajectory gradients
    (B, n), (B, l_out, n l_in), (B, l_out, l_in) and losses (B,). The
    simulated outputs always start from a zero state; whatever initial state
    produced Y is the data's business, not the gradient's.
    """
    B, T, l_in = X.shape
    n, l_out = system.n, system.l_out
    if not 0 <= T1 < T:
        raise ValueError(f"cutoff T1={T1} must satisfy 0 <= T1 < T={T}")
    a, C, D = system.a, system.C, system.D
    with np.errstate(over="ignore", invalid="ignore"):
        states = np.zeros((T, B, n, l_in))
        s = np.zeros((B, n, l_in))
        y_sim = np.empty((B, T, l_out))
        for t in range(T):
            states[t] = s
            y_sim[:, t] = s.reshape(B, -1) @ C.T + X[:, t] @ D.T
            s = _advance(a, s, X[:, t])
        w = np.zeros((B, T, l_out))
        resid = y_sim[:, T1:] - Y[:, T1:]
        w[:, T1:] = 2.0 * resid / (T - T1)
        losses = np.sum(resid**2, axis=(1, 2)) / (T - T1)

        g_C = np.einsum("bto,tbj->boj", w, states.reshape(T, B, -1))
        g_D = np.einsum("bto,bti->boi", w, X)
        g_a = np.zeros((B, n))
        lam = np.zeros((B, n, l_in))
        for t in range(T - 1, 0, -1):
            lam = _advance_adjoint(a, lam) + (w[:, t] @ C).reshape(B, n, l_in)
            g_a -= np.einsum("bml,bl->bm", states[t - 1][:, ::-1], lam[:, -1])
    return g_a, g_C, g_D, losses


def backprop_gradient(
    est: SystemParams, traj: Trajectory, T1: int | None = None
) -> GradientTriple:
    """Gradient of the partial loss at ``est`` for one trajectory.

    Exact to first order: central finite differences of
    :func:`ldsid.risk.empirical_partial_loss` reproduce it to the
    differencing accuracy.
    """
    if traj.l_in != est.l_in or traj.l_out != est.l_out:
        raise ValueError("trajectory dimensions do not match the system")
    if T1 is None:
        T1 = risk_mod.default_cutoff(traj.T)
    g_a, g_C, g_D, _ = _batch_gradients(est, traj.x[None], traj.y[None], T1)
    return GradientTriple(g_a[0], g_C[0], g_D[0])


@dataclass(frozen=True)
class TwoRegimeSchedule:
    """Learning rate from the generic convergence analysis.

    Given the user's estimates of gradient variance V, smoothness constant
    gamma, progress constant tau, and radius bound R, the rate is
    ``R / sqrt(V K)`` when the step budget K is large and ``tau / (2 gamma)``
    otherwise. The constants are not measurable in advance, so they are
    supplied, never inferred.
    """

    V: float
    gamma: float
    tau: float
    R: float

    def rate(self, K: int) -> float:
        if K <= 0:
            raise ValueError("step budget must be positive")
        if K >= 4.0 * self.R**2 * self.gamma**2 / (self.V * self.tau**2):
            return self.R / np.sqrt(self.V * K)
        return self.tau / (2.0 * self.gamma)


@dataclass
class SgdConfig:
    """Knobs for :func:`sgd_train`.

    ``learning_rate`` is a positive constant or a :class:`TwoRegimeSchedule`;
    ``projection`` is the half-space polytope for the characteristic
    coefficients (None trains unconstrained). ``radius_bound`` and
    ``split_beta`` are carried for reports and sequence splitting.
    """

    learning_rate: float | TwoRegimeSchedule = 0.01
    passes: int = 1
    t1_fraction: float = 0.25
    radius_bound: float | None = None
    split_beta: int | None = None
    seed: int = 0
    projection: AcqPolytope | None = None
    projection_tol: float = 1e-8
    return_random_iterate: bool = False

    def __post_init__(self) -> None:
        if isinstance(self.learning_rate, (int, float)) and self.learning_rate < 0:
            raise ValueError("learning rate must be >= 0")
        if not 0.0 <= self.t1_fraction < 1.0:
            raise ValueError("t1_fraction must be in [0, 1)")
        if self.passes < 1:
            raise ValueError("passes must be >= 1")


@dataclass
class TrainHistory:
    """Per-iteration records; ``pop_risk`` is NaN when no teacher was supplied."""

    partial_loss: np.ndarray
    grad_norm: np.ndarray
    pop_risk: np.ndarray
    projected: np.ndarray

    def __len__(self) -> int:
        return len(self.partial_loss)


class TrainResult(NamedTuple):
    params: SystemParams
    history: TrainHistory


class TrainingDivergedError(RuntimeError):
    def __init__(self, iteration: int, history: TrainHistory):
        self.iteration = iteration
        self.history = history
        super().__init__(f"non-finite loss or gradient at iteration {iteration}")


def sgd_train(
    stream: Iterable[Trajectory],
    config: SgdConfig,
    init: SystemParams,
    teacher: SystemParams | None = None,
    sigma: float = 0.0,
    callback=None,
    callback_every: int = 0,
) -> TrainResult:
    """Projected stochastic gradient descent with the partial loss.

    One gradient step per sample from ``stream`` (repeated ``config.passes``
    times when the stream is re-iterable), projecting the characteristic
    coefficients after every step. With a teacher the closed-form population
    risk is recorded each iteration. Identical seed, config, and stream order
    reproduce the history bit for bit.
    """
    samples: Iterable[Trajectory] = stream
    total_steps = None
    if config.passes > 1 or isinstance(config.learning_rate, TwoRegimeSchedule):
        samples = list(stream)
        total_steps = len(samples) * config.passes
    if isinstance(config.learning_rate, TwoRegimeSchedule):
        eta = config.learning_rate.rate(total_steps)
    else:
        eta = float(config.learning_rate)

    a = init.a.copy()
    C = init.C.copy()
    D = init.D.copy()
    if config.projection is not None:
        a = project(a, config.projection, tol=config.projection_tol)

    losses, gnorms, pops, projected = [], [], [], []
    snapshots = [] if config.return_random_iterate else None

    def iteration_stream():
        if config.passes == 1 and total_steps is None:
            return samples
        return chain.from_iterable([samples] * config.passes)

    i = 0
    for traj in iteration_stream():
        current = SystemParams(a, C, D)
        T1 = int(config.t1_fraction * traj.T)
        g_a, g_C, g_D, loss = _batch_gradients(current, traj.x[None], traj.y[None], T1)
        gnorm = float(np.sqrt(np.sum(g_a**2) + np.sum(g_C**2) + np.sum(g_D**2)))
        if not (np.isfinite(loss[0]) and np.isfinite(gnorm)):
            raise TrainingDivergedError(
                i,
                TrainHistory(
                    np.asarray(losses), np.asarray(gnorms), np.asarray(pops),
                    np.asarray(projected, dtype=bool),
                ),
            )
        a = a - eta * g_a[0]
        C = C - eta * g_C[0]
        D = D - eta * g_D[0]
        moved = False
        if config.projection is not None:
            a_proj = project(a, config.projection, tol=config.projection_tol)
            moved = bool(np.linalg.norm(a_proj - a) > 1e-12)
            a = a_proj
        losses.append(float(loss[0]))
        gnorms.append(gnorm)
        projected.append(moved)
        if teacher is not None:
            pops.append(
                risk_mod.population_risk_closed(SystemParams(a, C, D), teacher, traj.T, sigma)
            )
        else:
            pops.append(float("nan"))
        if snapshots is not None:
            snapshots.append((a.copy(), C.copy(), D.copy()))
        i += 1
        if callback is not None and callback_every > 0 and i % callback_every == 0:
            callback(i, SystemParams(a, C, D))

    history = TrainHistory(
        np.asarray(losses), np.asarray(gnorms), np.asarray(pops),
        np.asarray(projected, dtype=bool),
    )
    if snapshots:
        rng = np.random.default_rng(config.seed)
        a, C, D = snapshots[int(rng.integers(len(snapshots)))]
    return TrainResult(SystemParams(a, C, D), history)


def history_to_csv(history: TrainHistory, path_or_file) -> None:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        writer = csv.writer(fh)
        writer.writerow(["iter", "partial_loss", "pop_risk_closed", "grad_norm", "projected_flag"])
        for i in range(len(history)):
            writer.writerow(
                [
                    i,
                    format(history.partial_loss[i], ".17g"),
                    format(history.pop_risk[i], ".17g"),
                    format(history.grad_norm[i], ".17g"),
                    int(history.projected[i]),
                ]
            )
    finally:
        if own:
            fh.close()


def split_sequences(
    trajs: Sequence[Trajectory], beta: int, n: int
) -> list[Trajectory]:
    """Cut each trajectory into length beta*n pieces, dropping the remainder.

    The pieces start at unknown states, so their ``h0`` metadata is cleared;
    the partial loss tolerates that by construction.
    """
    L = beta * n
    out = []
    for traj in trajs:
        if L > traj.T:
            raise ValueError(f"chunk length {L} exceeds trajectory length {traj.T}")
        for start in range(0, traj.T - L + 1, L):
            out.append(
                Trajectory(
                    traj.x[start : start + L],
                    traj.y[start : start + L],
                    h0=None,
                    noise_sigma=traj.noise_sigma,
                )
            )
    return out


def improper_train(
    stream: Iterable[Trajectory],
    config: SgdConfig,
    n_states: int,
    init: SystemParams | None = None,
    teacher: SystemParams | None = None,
    sigma: float = 0.0,
    callback=None,
    callback_every: int = 0,
) -> TrainResult:
    """Train an order-``n_states`` model on data from a (possibly lower-order) system.

    With ``n_states`` equal to the data order this is exactly :func:`sgd_train`;
    a larger order gives the optimizer the slack to land on an equivalent
    representation whose characteristic polynomial lies in the projection set.
    ``config.projection`` must be built at order ``n_states``.
    """
    if config.projection is not None and config.projection.n != n_states:
        raise ValueError(
            f"projection polytope order {config.projection.n} != n_states {n_states}"
        )
    it = iter(stream)
    try:
        first = next(it)
    except StopIteration:
        raise ValueError("empty trajectory stream")
    if init is None:
        init = SystemParams(
            np.zeros(n_states),
            np.zeros((first.l_out, n_states * first.l_in)),
            np.zeros((first.l_out, first.l_in)),
        )
    return sgd_train(
        chain([first], it), config, init, teacher=teacher, sigma=sigma,
        callback=callback, callback_every=callback_every,
    )


class LinRegResult(NamedTuple):
    """Least-squares window regression: weights (window+1)*l_in per output,
    oldest input first, with the mean squared residual as the bias floor."""

    weights: np.ndarray
    bias_floor: float
    rows: int


def linreg_baseline(trajs: Sequence[Trajectory], window: int) -> LinRegResult:
    """Fit y_k from the input window [x_{k-window}, ..., x_k] by least squares.

    This is the improper baseline whose memory is the window itself: exact for
    finite-impulse teachers once the window covers their order, biased
    otherwise no matter how many samples are provided.
    """
    if window < 0:
        raise ValueError("window must be >= 0")
    feats, targets = [], []
    for traj in trajs:
        if traj.T <= window:
            raise ValueError(f"trajectory length {traj.T} too short for window {window}")
        for k in range(window, traj.T):
            feats.append(traj.x[k - window : k + 1].reshape(-1))
            targets.append(traj.y[k])
    A = np.asarray(feats)
    b = np.asarray(targets)
    if len(A) < A.shape[1]:
        raise ValueError(
            f"rank-deficient design: {len(A)} rows for {A.shape[1]} unknowns"
        )
    weights, _, _, _ = np.linalg.lstsq(A, b, rcond=None)
    resid = b - A @ weights
    return LinRegResult(weights, float(np.mean(np.sum(resid**2, axis=1))), len(A))


def _sample_batch(
    true_: SystemParams,
    T: int,
    trials: int,
    sigma: float,
    rng: np.random.Generator,
    h0_scale: float = 0.0,
):
    X = rng.standard_normal((trials, T, true_.l_in))
    B = trials
    n, l_in, l_out = true_.n, true_.l_in, true_.l_out
    s = (
        h0_scale * rng.standard_normal((B, n, l_in))
        if h0_scale > 0
        else np.zeros((B, n, l_in))
    )
    Y = np.empty((B, T, l_out))
    for t in range(T):
        Y[:, t] = s.reshape(B, -1) @ true_.C.T + X[:, t] @ true_.D.T
        s = _advance(true_.a, s, X[:, t])
    if sigma > 0:
        Y += sigma * rng.standard_normal((B, T, l_out))
    return X, Y


class VarianceReport(NamedTuple):
    """Per-component sample variances of the gradient estimator and their sum."""

    var_a: np.ndarray
    var_C: np.ndarray
    var_D: np.ndarray
    total: float


def gradient_variance_probe(
    est: SystemParams,
    true_: SystemParams,
    T: int,
    trials: int,
    sigma: float = 0.0,
    seed: int = 0,
    T1: int | None = None,
    h0_scale: float = 0.0,
) -> VarianceReport:
    """Empirical variance of the per-sample gradient over fresh trajectories."""
    if trials < 100:
        raise ValueError("need at least 100 trials")
    if T1 is None:
        T1 = risk_mod.default_cutoff(T)
    rng = np.random.default_rng(seed)
    X, Y = _sample_batch(true_, T, trials, sigma, rng, h0_scale)
    g_a, g_C, g_D, _ = _batch_gradients(est, X, Y, T1)
    var_a = g_a.var(axis=0, ddof=1)
    var_C = g_C.var(axis=0, ddof=1)
    var_D = g_D.var(axis=0, ddof=1)
    return VarianceReport(
        var_a, var_C, var_D, float(var_a.sum() + var_C.sum() + var_D.sum())
    )


class UnbiasednessReport(NamedTuple):
    """Gap between the mean gradient and the idealized-risk gradient.

    ``gap`` is the Euclidean distance over all components; ``se_total`` the
    corresponding standard error sqrt(sum of per-component variances / trials).
    """

    gap: float
    se_total: float
    mean: GradientTriple
    reference: GradientTriple


def unbiasedness_probe(
    est: SystemParams,
    true_: SystemParams,
    T: int,
    trials: int,
    sigma: float = 0.0,
    seed: int = 0,
    T1: int | None = None,
    h0_scale: float = 0.0,
    fd_step: float = 1e-5,
) -> UnbiasednessReport:
    """Compare the mean training gradient to the idealized-risk gradient.

    The reference is the central finite-difference gradient of the idealized
    risk plus the feedthrough gap at ``est``. With zero initial states the two
    agree up to the truncation tail; drawing initial states (``h0_scale``)
    introduces the bias the cutoff is meant to wash out, which shrinks as T
    grows.
    """
    if T1 is None:
        T1 = risk_mod.default_cutoff(T)
    rng = np.random.default_rng(seed)
    X, Y = _sample_batch(true_, T, trials, sigma, rng, h0_scale)
    g_a, g_C, g_D, _ = _batch_gradients(est, X, Y, T1)
    mean = GradientTriple(g_a.mean(axis=0), g_C.mean(axis=0), g_D.mean(axis=0))
    f_a, f_C, f_D = risk_mod.finite_diff_idealized_gradient(
        est, true_, step=fd_step, include_feedthrough=True
    )
    ref = GradientTriple(f_a, f_C, f_D)
    gap = float(
        np.sqrt(
            np.sum((mean.g_a - f_a) ** 2)
            + np.sum((mean.g_C - f_C) ** 2)
            + np.sum((mean.g_D - f_D) ** 2)
        )
    )
    total_var = float(
        g_a.var(axis=0, ddof=1).sum()
        + g_C.var(axis=0, ddof=1).sum()
        + g_D.var(axis=0, ddof=1).sum()
    )
    return UnbiasednessReport(gap, float(np.sqrt(total_var / trials)), mean, ref)
