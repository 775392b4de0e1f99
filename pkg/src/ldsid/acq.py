"""The stability cone, its coefficient sets, grid polytopes, and Euclidean projection.

A coefficient vector a = (a_1, ..., a_n) is alpha-acquiescent for a cone
(tau0, tau1, tau2) when the scaled characteristic polynomial p_a(z)/z^n maps
the radius-alpha circle into

    C = { w : Re w >= (1 + tau0) |Im w| }  intersect  { tau1 < Re w < tau2 }.

Membership is checked on a finite circle grid. Because p_a(z)/z^n equals
q_a(w) = 1 + a_1 w + ... + a_n w^n at w = 1/z, every grid constraint is affine
in a, which turns the grid check into a half-space intersection: the polytope
used as the projection set during training. The polytope is built at slightly
tightened cone levels (midpoints toward a relaxed cone), so that full-circle
members pass the grid check and grid members stay inside the relaxed
full-circle set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .poly import char_poly, roots


@dataclass(frozen=True)
class Cone:
    """Cone parameters: slope slack tau0 > 0 and real-part window (tau1, tau2)."""

    tau0: float
    tau1: float
    tau2: float

    def __post_init__(self) -> None:
        if not (self.tau0 > 0 and self.tau1 > 0 and self.tau1 < self.tau2):
            raise ValueError("cone requires tau0 > 0 and 0 < tau1 < tau2")

    def contains(self, w, strict_interval: bool = True):
        """Full-cone membership: non-strict slope, strict real-part window."""
        w = np.asarray(w, dtype=complex)
        slope = w.real >= (1.0 + self.tau0) * np.abs(w.imag)
        if strict_interval:
            window = (w.real > self.tau1) & (w.real < self.tau2)
        else:
            window = (w.real >= self.tau1) & (w.real <= self.tau2)
        out = slope & window
        return bool(out) if out.ndim == 0 else out

    def contains_half(self, w):
        """Half-cone membership: |w| <= tau2, Re w >= tau1, Re w >= tau0 |Im w|."""
        w = np.asarray(w, dtype=complex)
        out = (
            (np.abs(w) <= self.tau2)
            & (w.real >= self.tau1)
            & (w.real >= self.tau0 * np.abs(w.imag))
        )
        return bool(out) if out.ndim == 0 else out


#: Cone used throughout when none is supplied.
DEFAULT_CONE = Cone(0.1, 0.1, 10.0)


def cone_contains(cone: Cone, w, strict_interval: bool = True):
    return cone.contains(w, strict_interval=strict_interval)


def default_grid_size(n: int) -> int:
    """Grid size 20n with a floor of 64 for tiny orders."""
    return max(20 * n, 64)


def scaled_char_values(a: np.ndarray, alpha: float, M: int) -> np.ndarray:
    """Values of p_a(z)/z^n on the radius-alpha circle grid of size M.

    Evaluated as q_a(w) = 1 + sum_j a_j w^j at w = exp(-i theta)/alpha, which
    is affine in a.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    w = np.exp(-2j * np.pi * np.arange(M) / M) / alpha
    powers = w[None, :] ** np.arange(1, len(a) + 1)[:, None]
    return 1.0 + a @ powers


class MembershipReport(NamedTuple):
    """Grid membership result; truthiness is overall membership.

    Margins are worst-case slack per constraint family (negative = violated):
    slope is min(Re - (1+tau0)|Im|), lower is min(Re - tau1), upper is
    min(tau2 - Re). ``worst_angle`` is the grid angle attaining the most
    negative margin.
    """

    ok: bool
    slope_margin: float
    lower_margin: float
    upper_margin: float
    worst_angle: float

    def __bool__(self) -> bool:
        return self.ok


def is_acquiescent(
    a: np.ndarray,
    alpha: float,
    cone: Cone = DEFAULT_CONE,
    M: int | None = None,
) -> MembershipReport:
    """Grid check that p_a(z)/z^n stays inside the cone on the radius-alpha circle."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    n = len(a)
    if M is None:
        M = default_grid_size(n)
    elif M < 20 * n:
        raise ValueError(f"grid size {M} below the minimum 20n = {20 * n}")
    v = scaled_char_values(a, alpha, M)
    slope = v.real - (1.0 + cone.tau0) * np.abs(v.imag)
    lower = v.real - cone.tau1
    upper = cone.tau2 - v.real
    margins = np.minimum(np.minimum(slope, lower), upper)
    worst = int(np.argmin(margins))
    ok = slope.min() >= 0.0 and lower.min() > 0.0 and upper.min() > 0.0
    return MembershipReport(
        bool(ok),
        float(slope.min()),
        float(lower.min()),
        float(upper.min()),
        2.0 * np.pi * worst / M,
    )


@dataclass(frozen=True, eq=False)
class AcqPolytope:
    """Half-space intersection approximating the coefficient set on a circle grid.

    Four affine constraints per grid point (two slope half-planes and the two
    real-part bounds), stored as rows ``normals @ a <= offsets``. ``kappa``
    holds the tightened cone levels the constraints encode.
    """

    n: int
    alpha: float
    cone: Cone
    kappa: tuple[float, float, float]
    M: int
    normals: np.ndarray
    offsets: np.ndarray

    def constraint_values(self, a: np.ndarray) -> np.ndarray:
        """Signed violations ``normals @ a - offsets`` (<= 0 means satisfied)."""
        return self.normals @ np.asarray(a, dtype=float) - self.offsets

    def contains(self, a: np.ndarray, tol: float = 0.0) -> bool:
        return bool(self.constraint_values(a).max() <= tol)

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "alpha": self.alpha,
            "cone": [self.cone.tau0, self.cone.tau1, self.cone.tau2],
            "kappa": list(self.kappa),
            "grid_angles": [2.0 * np.pi * k / self.M for k in range(self.M)],
        }


def sandwich_levels(cone: Cone) -> tuple[float, float, float]:
    """Midpoints between the cone and its relaxation (tau0/2, tau1/2, 2*tau2)."""
    return (0.75 * cone.tau0, 0.75 * cone.tau1, 1.5 * cone.tau2)


def relaxed_cone(cone: Cone) -> Cone:
    """The relaxed cone that grid members provably stay inside of."""
    return Cone(cone.tau0 / 2.0, cone.tau1 / 2.0, 2.0 * cone.tau2)


def build_polytope(
    n: int,
    alpha: float,
    cone: Cone = DEFAULT_CONE,
    M: int | None = None,
    kappa: tuple[float, float, float] | None = None,
) -> AcqPolytope:
    """Half-space polytope for order-n coefficient vectors on the radius-alpha grid."""
    if n < 1:
        raise ValueError("order must be >= 1")
    if M is None:
        M = default_grid_size(n)
    elif M < 20 * n:
        raise ValueError(f"grid size {M} below the minimum 20n = {20 * n}")
    if kappa is None:
        kappa = sandwich_levels(cone)
    k0, k1, k2 = kappa
    w = np.exp(-2j * np.pi * np.arange(M) / M) / alpha
    powers = w[:, None] ** np.arange(1, n + 1)[None, :]  # (M, n)
    re, im = powers.real, powers.imag
    # Constraint values are affine in a: Re v = 1 + a.re_j, Im v = a.im_j.
    normals = np.concatenate(
        [
            (1.0 + k0) * im - re,  # (1+k0) Im v <= Re v
            -(1.0 + k0) * im - re,  # -(1+k0) Im v <= Re v
            -re,  # Re v >= k1
            re,  # Re v <= k2
        ]
    )
    offsets = np.concatenate(
        [np.ones(M), np.ones(M), np.full(M, 1.0 - k1), np.full(M, k2 - 1.0)]
    )
    normals.flags.writeable = False
    offsets.flags.writeable = False
    polytope = AcqPolytope(n, alpha, cone, kappa, M, normals, offsets)
    if not polytope.contains(np.zeros(n)):
        raise ValueError("infeasible polytope: origin excluded, cone levels inconsistent")
    return polytope


class ProjectionError(RuntimeError):
    pass


def _qp_project(a, units, bounds, tol):
    """Exact projection by an interior-point quadratic program.

    The returned point carries a rigorous certificate built from the solver's
    multipliers: for any lam >= 0 the value at the stationary point of the
    Lagrangian lower-bounds the optimum, so primal minus that bound caps the
    objective suboptimality.
    """
    from cvxopt import matrix, solvers

    options = {"show_progress": False, "abstol": 1e-12, "reltol": 1e-12}
    sol = solvers.qp(
        matrix(np.eye(len(a))), matrix(-a), matrix(units), matrix(bounds),
        options=options,
    )
    if sol["status"] != "optimal":
        raise ProjectionError(f"QP projection failed: status {sol['status']}")
    x = np.asarray(sol["x"]).ravel()
    lam = np.maximum(np.asarray(sol["z"]).ravel(), 0.0)
    stationary = a - units.T @ lam
    dual = 0.5 * np.sum((stationary - a) ** 2) + lam @ (units @ stationary - bounds)
    primal = 0.5 * np.sum((x - a) ** 2)
    feasibility = float((units @ x - bounds).max())
    if feasibility > tol or primal - dual > tol:
        raise ProjectionError(
            f"projection certificate failed (feasibility {feasibility:.3g}, "
            f"duality gap {primal - dual:.3g})"
        )
    return x


def project(
    a: np.ndarray,
    polytope: AcqPolytope,
    tol: float = 1e-8,
    max_sweeps: int = 300,
) -> np.ndarray:
    """Euclidean projection of a onto the polytope.

    Cyclic Dykstra alternating projections over a working set of near-active
    half-spaces. The iterate always satisfies stationarity x = a - sum_i q_i
    with the corrections q_i nonnegative multiples of constraint normals, so
    the stopping rule checks the remaining KKT conditions: feasibility within
    ``tol`` and a duality gap (sum of complementarity products) within
    ``tol``, which bounds the objective suboptimality by ``tol``. If the
    sweeps stall before certifying (near-parallel grid constraints can trade
    correction mass very slowly), an interior-point solve finishes the job
    under the same certificate. A feasible input is returned unchanged.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    viol = polytope.constraint_values(a)
    if viol.max() <= tol:
        return a.copy()

    norms = np.linalg.norm(polytope.normals, axis=1)
    units = polytope.normals / norms[:, None]
    bounds = polytope.offsets / norms

    # Working set: currently violated plus nearly active constraints.
    active = np.flatnonzero(viol / norms > -1e-6)
    x = a.copy()
    corrections = {int(i): np.zeros_like(a) for i in active}
    for _ in range(max_sweeps):
        for i in list(corrections):
            y = x + corrections[i]
            lam = max(0.0, float(units[i] @ y - bounds[i]))
            if lam == 0.0 and not corrections[i].any():
                # Zero correction and strictly feasible: dropping the
                # constraint leaves the Dykstra state untouched.
                if units[i] @ x - bounds[i] < -tol:
                    del corrections[i]
                continue
            corrections[i] = lam * units[i]
            x = y - corrections[i]
        full = units @ x - bounds
        feasible = full.max() <= tol and polytope.constraint_values(x).max() <= tol
        gap = sum(
            abs(float(units[i] @ x - bounds[i])) * np.linalg.norm(corrections[i])
            for i in corrections
        )
        if feasible and gap <= tol:
            return x
    # Dykstra stalled; finish with the certified interior-point solve.
    return _qp_project(a, units, bounds, tol)


def project_qp(a: np.ndarray, polytope: AcqPolytope, tol: float = 1e-8) -> np.ndarray:
    """Projection via the explicit quadratic program (independent oracle path)."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if polytope.contains(a):
        return a.copy()
    norms = np.linalg.norm(polytope.normals, axis=1)
    return _qp_project(a, polytope.normals / norms[:, None], polytope.offsets / norms, tol)


def spectral_radius_ok(a: np.ndarray, alpha: float) -> bool:
    """True when every characteristic root has magnitude at most alpha + 1e-8."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    return bool(np.abs(roots(char_poly(a))).max() <= alpha + 1e-8)


class NoBlowupReport(NamedTuple):
    """Measured impulse-energy sums against their cone bounds.

    ``sum_ok``: the alpha-discounted energy sum stays below 2 pi n / (alpha^2n tau1^2).
    ``pointwise_ok``: every ||A^k B||^2 respects min(2 pi n/tau1^2,
    2 pi n alpha^(2k-2n)/tau1^2). Measured quantities are included for reports.
    """

    sum_ok: bool
    pointwise_ok: bool
    discounted_sum: float
    discounted_bound: float
    max_pointwise_excess: float

    def __bool__(self) -> bool:
        return self.sum_ok and self.pointwise_ok


def no_blowup_ok(
    a: np.ndarray,
    alpha: float,
    tau1: float = DEFAULT_CONE.tau1,
    K: int = 2000,
    cone: Cone | None = None,
) -> NoBlowupReport:
    """Check the impulse-energy bounds implied by cone membership.

    The coefficient vector must already be a member at radius alpha (checked
    here; failure raises rather than reporting, to keep precondition failures
    distinct from bound violations).
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if cone is None:
        cone = Cone(DEFAULT_CONE.tau0, tau1, max(DEFAULT_CONE.tau2, 2 * tau1))
    report = is_acquiescent(a, alpha, cone)
    if not report:
        raise ValueError(
            f"precondition failed: not a radius-{alpha} member (margins {report})"
        )
    n = len(a)
    # v_k = alpha^{-k} A^k B, advanced in scaled form to avoid overflow.
    v = np.zeros((n, 1))
    v[-1, 0] = 1.0
    discounted = 0.0
    bound_point = 2.0 * np.pi * n / tau1**2
    max_excess = -np.inf
    pointwise_ok = True
    scale = 1.0  # alpha^k relative to the scaled iterate
    for k in range(K + 1):
        energy_scaled = float(np.sum(v * v))  # ||alpha^{-k} A^k B||^2
        discounted += energy_scaled
        energy = energy_scaled * scale**2  # ||A^k B||^2
        envelope = min(bound_point, bound_point * alpha ** (2 * k - 2 * n))
        max_excess = max(max_excess, energy - envelope)
        if energy > envelope * (1.0 + 1e-9):
            pointwise_ok = False
        v = np.concatenate([v[1:], -np.einsum("m,ml->l", a, v[::-1])[None]]) / alpha
        scale *= alpha
    discounted_bound = 2.0 * np.pi * n * alpha ** (-2 * n) / tau1**2
    return NoBlowupReport(
        discounted <= discounted_bound * (1.0 + 1e-9),
        pointwise_ok,
        discounted,
        discounted_bound,
        float(max_excess),
    )
