"""Synthetic teachers and data: cone members, root-based polynomials, trajectories.

Teachers are rejection-sampled coefficient vectors that pass the cone
membership check, paired with an output map rescaled so the strictly proper
transfer function has unit H2 norm. Trajectory sampling derives one child seed
per trajectory from (seed, index), so datasets are reproducible regardless of
how the sampling loop is scheduled.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from typing import Iterator, NamedTuple

import numpy as np

from . import lds
from .acq import DEFAULT_CONE, Cone, is_acquiescent
from .lds import SystemParams, Trajectory, TransferFunction, to_transfer
from .poly import Polynomial, gamma_quantity, h2_norm

STRATEGIES = ("gaussian_coeff", "l1_ball", "random_roots", "artificial")
INPUT_DISTS = ("gaussian", "rademacher")


@dataclass(frozen=True)
class GenSpec:
    """Declarative description of one synthetic dataset."""

    n: int
    alpha: float
    strategy: str = "gaussian_coeff"
    input_dist: str = "gaussian"
    sigma: float = 0.0
    T: int = 64
    N: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError("alpha must be in (0, 1]")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.input_dist not in INPUT_DISTS:
            raise ValueError(f"unknown input distribution {self.input_dist!r}")

    def to_json(self) -> dict:
        return asdict(self)


class RejectionCapError(RuntimeError):
    """Raised when rejection sampling exhausts its attempt budget."""

    def __init__(self, attempts: int, accepted: int):
        self.acceptance_rate = accepted / attempts if attempts else 0.0
        super().__init__(
            f"rejection cap reached after {attempts} attempts "
            f"(acceptance rate {self.acceptance_rate:.2%})"
        )


def gaussian_coeff_scale(n: int) -> float:
    """Default coefficient scale 0.1 / sqrt(n log(n+1))."""
    return 0.1 / np.sqrt(n * np.log(n + 1.0))


def l1_ball_radius(cone: Cone) -> float:
    """Largest l1 radius whose whole ball satisfies the cone at radius one.

    A coefficient vector with ||a||_1 <= r keeps q_a(w) inside the disk of
    radius r around 1 on the unit circle; the disk fits the slope constraint
    iff r <= 1/sqrt(1 + (1+tau0)^2), which tends to sqrt(2)/2 as tau0 -> 0.
    The real-part window additionally needs tau1 <= 1 - r and tau2 >= 1 + r.
    """
    r = 1.0 / np.sqrt(1.0 + (1.0 + cone.tau0) ** 2)
    return min(r, 1.0 - cone.tau1) * (1.0 - 1e-12)


def _draw_coefficients(n: int, strategy: str, cone: Cone, rng: np.random.Generator):
    if strategy == "gaussian_coeff":
        return rng.normal(0.0, gaussian_coeff_scale(n), size=n)
    if strategy == "l1_ball":
        # Uniform on the l1 ball: exponential direction trick plus radius power.
        signs = rng.choice([-1.0, 1.0], size=n)
        exp = rng.exponential(size=n)
        direction = exp / exp.sum()
        radius = l1_ball_radius(cone) * rng.uniform() ** (1.0 / n)
        return signs * direction * radius
    raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")


def random_acquiescent(
    n: int,
    alpha: float,
    cone: Cone = DEFAULT_CONE,
    strategy: str = "gaussian_coeff",
    rng: np.random.Generator | None = None,
    max_attempts: int = 10_000,
    l_in: int = 1,
    l_out: int = 1,
) -> SystemParams:
    """Rejection-sample a cone member at radius alpha and dress it as a teacher.

    The output map is standard normal rescaled so the strictly proper transfer
    function has H2 norm one; the feedthrough is standard normal.
    """
    if rng is None:
        rng = np.random.default_rng()
    accepted = None
    for attempt in range(1, max_attempts + 1):
        a = _draw_coefficients(n, strategy, cone, rng)
        if is_acquiescent(a, alpha, cone):
            accepted = a
            break
    if accepted is None:
        raise RejectionCapError(max_attempts, 0)
    while True:
        C = rng.standard_normal((l_out, n * l_in))
        system = SystemParams(accepted, C, np.zeros((l_out, l_in)))
        norm = to_transfer(system).h2_norm()
        if norm > 1e-9:
            break
    D = rng.standard_normal((l_out, l_in))
    return SystemParams(accepted, C / norm, D)


class RandomRootsPoly(NamedTuple):
    poly: Polynomial
    gamma: float
    h2: float


def random_roots_poly(
    n_half: int, alpha: float, rng: np.random.Generator | None = None
) -> RandomRootsPoly:
    """Monic degree-2*n_half polynomial with conjugate root pairs at radius alpha.

    Angles are uniform; the root-separation quantity and the coefficient-norm
    H2 value are reported alongside the polynomial.
    """
    if n_half < 1:
        raise ValueError("n_half must be >= 1")
    if rng is None:
        rng = np.random.default_rng()
    angles = rng.uniform(0.0, 2.0 * np.pi, size=n_half)
    roots = alpha * np.exp(1j * angles)
    p = Polynomial.from_roots(np.concatenate([roots, roots.conj()]))
    return RandomRootsPoly(p, gamma_quantity(p), float(np.linalg.norm(p.coeffs)))


def artificial_construction(n: int, alpha: float) -> tuple[Polynomial, Polynomial]:
    """A hard teacher polynomial and the degree-3 multiplier that repairs it.

    p has a triple root at zero and the remaining radius-alpha roots of unity
    except the first, last, and (n-1)-th; u restores those three, so that
    p(z) u(z) / z^(n+3) collapses to 1 - alpha^n / z^n identically.
    """
    if n < 4:
        raise ValueError("n must be >= 4")
    omega = np.exp(2j * np.pi / n)
    kept = [alpha * omega**j for j in range(1, n + 1) if j not in (1, n - 1, n)]
    p = Polynomial.from_roots([0.0, 0.0, 0.0] + kept)
    u = Polynomial.from_roots([alpha * omega, alpha, alpha * omega ** (-1)])
    return p, u


def min_representation_pair(n: int) -> tuple[TransferFunction, TransferFunction]:
    """Two systems of very different order whose transfer functions nearly agree.

    The big system has numerator z^n - 0.8^n over (z - 0.1)(z^n - 0.9^n); the
    small one is 1/(z - 0.1). Their gap on the unit circle decays like 0.9^n,
    so no accuracy achievable at moderate n can identify the representation.
    """
    num_small = np.zeros((1, 1, 1))
    num_small[0, 0, 0] = 1.0
    small = TransferFunction(num_small, Polynomial([-0.1, 1.0]))
    s = Polynomial.monomial(n) - Polynomial([0.8**n])
    den = Polynomial([-0.1, 1.0]) * (Polynomial.monomial(n) - Polynomial([0.9**n]))
    num_big = np.zeros((1, 1, n + 1))
    num_big[0, 0, : s.degree + 1] = s.coeffs
    big = TransferFunction(num_big, den)
    return big, small


def _child_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _draw_inputs(rng, dist: str, shape) -> np.ndarray:
    if dist == "gaussian":
        return rng.standard_normal(shape)
    if dist == "rademacher":
        return rng.choice([-1.0, 1.0], size=shape)
    raise ValueError(f"unknown input distribution {dist!r}")


def _draw_h0(rng, policy, n_states: int) -> np.ndarray | None:
    if policy == "zero" or policy is None:
        return None
    if isinstance(policy, tuple) and policy[0] == "gaussian":
        return policy[1] * rng.standard_normal(n_states)
    raise ValueError(f"unknown h0 policy {policy!r}")


def sample_trajectory(
    system: SystemParams, spec: GenSpec, index: int, h0_policy="zero"
) -> Trajectory:
    """Trajectory number ``index`` of the dataset described by ``spec``."""
    rng = _child_rng(spec.seed, index)
    x = _draw_inputs(rng, spec.input_dist, (spec.T, system.l_in))
    h0 = _draw_h0(rng, h0_policy, system.n * system.l_in)
    xi = (
        spec.sigma * rng.standard_normal((spec.T, system.l_out))
        if spec.sigma > 0
        else None
    )
    traj = lds.simulate(system, x, h0=h0, noise=xi)
    return Trajectory(traj.x, traj.y, h0=h0, noise_sigma=spec.sigma)


def sample_trajectories(
    system: SystemParams, spec: GenSpec, h0_policy="zero"
) -> list[Trajectory]:
    """N independent trajectories with per-index derived seeds."""
    return [sample_trajectory(system, spec, i, h0_policy) for i in range(spec.N)]


def stream_trajectories(
    system: SystemParams, spec: GenSpec, h0_policy="zero", count: int | None = None
) -> Iterator[Trajectory]:
    """Lazily yield ``count`` (default spec.N) fresh trajectories."""
    total = spec.N if count is None else count
    for i in range(total):
        yield sample_trajectory(system, spec, i, h0_policy)


def _dress_polynomial(p: Polynomial, rng: np.random.Generator) -> SystemParams:
    """Teacher with characteristic polynomial p, unit-H2 output map, random D."""
    from .poly import coeffs_to_a

    a = coeffs_to_a(p)
    n = len(a)
    while True:
        C = rng.standard_normal((1, n))
        system = SystemParams(a, C, np.zeros((1, 1)))
        norm = to_transfer(system).h2_norm()
        if norm > 1e-9:
            break
    return SystemParams(a, C / norm, rng.standard_normal((1, 1)))


def make_teacher(
    spec: GenSpec, cone: Cone = DEFAULT_CONE, rng: np.random.Generator | None = None
) -> SystemParams:
    """Teacher for a dataset spec, dispatching on the sampling strategy.

    Cone-member strategies rejection-sample; ``random_roots`` (n must be even)
    and ``artificial`` build their characteristic polynomials directly and may
    fall outside the cone on purpose.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    if spec.strategy in ("gaussian_coeff", "l1_ball"):
        return random_acquiescent(
            spec.n, spec.alpha, cone, strategy=spec.strategy, rng=rng
        )
    if spec.strategy == "random_roots":
        if spec.n % 2:
            raise ValueError("random_roots requires an even order")
        p = random_roots_poly(spec.n // 2, spec.alpha, rng).poly
        return _dress_polynomial(p, rng)
    if spec.strategy == "artificial":
        p, _ = artificial_construction(spec.n, spec.alpha)
        return _dress_polynomial(p, rng)
    raise ValueError(f"unknown strategy {spec.strategy!r}; expected one of {STRATEGIES}")


def log_distance_expectation(
    rho: float, r: float, trials: int, rng: np.random.Generator | None = None
) -> float:
    """Monte-Carlo mean of log|x - lam| for |x| = rho and lam uniform at radius r.

    The exact value is log(max(rho, r)); the coincidence rho == r converges
    too, only more slowly.
    """
    if rng is None:
        rng = np.random.default_rng()
    lam = r * np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=trials))
    return float(np.mean(np.log(np.abs(rho - lam))))


# ---------------------------------------------------------------------------
# Dataset layout: teacher.json + traj_%05d.csv + manifest.json


def write_dataset(
    out_dir, system: SystemParams, spec: GenSpec, h0_policy="zero", cone: Cone = DEFAULT_CONE
) -> dict:
    """Write teacher, trajectories, and a manifest; returns the manifest dict."""
    os.makedirs(out_dir, exist_ok=True)
    teacher_path = os.path.join(out_dir, "teacher.json")
    lds.save_system(system, teacher_path)
    names = []
    for i in range(spec.N):
        traj = sample_trajectory(system, spec, i, h0_policy)
        name = f"traj_{i:05d}.csv"
        lds.trajectory_to_csv(traj, os.path.join(out_dir, name))
        names.append(name)
    report = is_acquiescent(system.a, spec.alpha, cone)
    manifest = {
        "spec": spec.to_json(),
        "seed": spec.seed,
        "teacher": "teacher.json",
        "trajectories": names,
        "h0_policy": list(h0_policy) if isinstance(h0_policy, tuple) else h0_policy,
        "teacher_membership": {
            "ok": report.ok,
            "slope_margin": report.slope_margin,
            "lower_margin": report.lower_margin,
            "upper_margin": report.upper_margin,
        },
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest


def load_dataset(in_dir) -> tuple[SystemParams, GenSpec, list[Trajectory]]:
    with open(os.path.join(in_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    spec = GenSpec(**manifest["spec"])
    system = lds.load_system(os.path.join(in_dir, manifest["teacher"]))
    trajs = [
        lds.trajectory_from_csv(os.path.join(in_dir, name), noise_sigma=spec.sigma)
        for name in manifest["trajectories"]
    ]
    return system, spec, trajs
