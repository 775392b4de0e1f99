"""Real-coefficient polynomials and the frequency-domain quantities built on them.

Everything here is a pure function of immutable values: polynomials are frozen
coefficient vectors (constant term first), evaluated anywhere on the complex
plane. On top of that sit root extraction, the root-separation quantity used to
size inverse approximations, H2 norms of rational functions, partial-fraction
weights, truncated polynomial inverses, and the square-root cone extension.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
import numpy.polynomial.polynomial as npoly

#: Roots closer than this are treated as repeated; the partial-fraction and
#: separation formulas blow up below it.
DISTINCT_ROOT_TOL = 1e-9

#: Leading-coefficient tolerance for monicity checks.
MONIC_TOL = 1e-12

#: Default quadrature size for H2 norms (uniform trapezoid on the unit circle).
H2_GRID_SIZE = 4096


def circle_grid(size: int, radius: float = 1.0) -> np.ndarray:
    """Uniform complex grid ``radius * exp(2i pi k / size)``, k = 0..size-1."""
    theta = 2.0 * np.pi * np.arange(size) / size
    return radius * np.exp(1j * theta)


def _polyval(coeffs: np.ndarray, z: np.ndarray | complex) -> np.ndarray | complex:
    """Horner evaluation; ``coeffs`` may have leading batch axes (..., K)."""
    c = np.asarray(coeffs)
    if c.ndim == 1:
        return npoly.polyval(z, c)
    zz = np.asarray(z)
    out = np.zeros(c.shape[:-1] + zz.shape, dtype=complex)
    for k in range(c.shape[-1] - 1, -1, -1):
        out = out * zz + c[..., k][..., None]
    return out


@dataclass(frozen=True, eq=False)
class Polynomial:
    """Real-coefficient polynomial, constant term first.

    Trailing zero coefficients are trimmed on construction, so ``degree`` is
    the index of the last stored coefficient. The zero polynomial is stored as
    the single coefficient ``[0.0]``.
    """

    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coefficients must be a nonempty 1-D sequence")
        c = npoly.polytrim(c, tol=0.0)
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def monomial(cls, degree: int, scale: float = 1.0) -> "Polynomial":
        c = np.zeros(degree + 1)
        c[degree] = scale
        return cls(c)

    @classmethod
    def from_roots(cls, roots: Sequence[complex], tol: float = 1e-8) -> "Polynomial":
        """Monic polynomial with the given roots; they must be conjugate-closed."""
        c = npoly.polyfromroots(np.asarray(roots, dtype=complex))
        scale = max(1.0, float(np.abs(c).max()))
        if np.abs(c.imag).max() > tol * scale:
            raise ValueError("root multiset is not conjugate-closed")
        return cls(c.real)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return self.degree == 0 and self.coeffs[0] == 0.0

    def is_monic(self, tol: float = MONIC_TOL) -> bool:
        return abs(self.coeffs[-1] - 1.0) <= tol

    def __call__(self, z):
        return _polyval(self.coeffs, z)

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            return Polynomial(npoly.polymul(self.coeffs, other.coeffs))
        return Polynomial(self.coeffs * float(other))

    __rmul__ = __mul__

    def __add__(self, other):
        if isinstance(other, Polynomial):
            return Polynomial(npoly.polyadd(self.coeffs, other.coeffs))
        return Polynomial(npoly.polyadd(self.coeffs, [float(other)]))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Polynomial):
            return Polynomial(npoly.polysub(self.coeffs, other.coeffs))
        return Polynomial(npoly.polysub(self.coeffs, [float(other)]))

    def __neg__(self):
        return Polynomial(-self.coeffs)

    def to_json(self) -> list[float]:
        """JSON form: plain list of coefficients, constant term first."""
        return [float(c) for c in self.coeffs]

    @classmethod
    def from_json(cls, data: Sequence[float]) -> "Polynomial":
        return cls(np.asarray(data, dtype=float))


def roots(p: Polynomial) -> np.ndarray:
    """All complex roots with multiplicity, via companion-matrix eigenvalues."""
    if p.degree < 1:
        raise ValueError("constant polynomial has no roots")
    return npoly.polyroots(p.coeffs)


def char_poly(a: np.ndarray) -> Polynomial:
    """Monic polynomial ``z^n + a_1 z^(n-1) + ... + a_n`` from (a_1, ..., a_n)."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if a.size == 0:
        raise ValueError("coefficient vector must be nonempty")
    return Polynomial(np.concatenate([a[::-1], [1.0]]))


def coeffs_to_a(p: Polynomial) -> np.ndarray:
    """Inverse of :func:`char_poly`; requires a monic input."""
    if not p.is_monic():
        raise ValueError("expected a monic polynomial")
    if p.degree < 1:
        raise ValueError("expected degree >= 1")
    return p.coeffs[:-1][::-1].copy()


def _pairwise_separation(lam: np.ndarray) -> float:
    diff = np.abs(lam[:, None] - lam[None, :])
    np.fill_diagonal(diff, np.inf)
    return float(diff.min())


def gamma_quantity(p: Polynomial) -> float:
    """Root-separation quantity ``sum_j |lam_j^n / prod_{i != j}(lam_i - lam_j)|``.

    Small values mean well-separated roots; the truncated-inverse error bound
    is proportional to it. Undefined (raises) for repeated roots.
    """
    lam = roots(p)
    n = p.degree
    if _pairwise_separation(lam) <= DISTINCT_ROOT_TOL:
        raise ValueError("gamma undefined for repeated roots")
    diff = lam[None, :] - lam[:, None]
    np.fill_diagonal(diff, 1.0)
    prods = np.prod(diff, axis=0)
    return float(np.sum(np.abs(lam**n / prods)))


class PartialFractions(NamedTuple):
    poles: np.ndarray
    weights: np.ndarray


def partial_fractions(p: Polynomial) -> PartialFractions:
    """Weights t_j with ``1/p(z) = sum_j t_j / (z - lam_j)`` for distinct roots.

    ``t_j`` is the reciprocal of ``prod_{i != j}(lam_j - lam_i)``.
    """
    if not p.is_monic():
        raise ValueError("expected a monic polynomial")
    lam = roots(p)
    if _pairwise_separation(lam) <= DISTINCT_ROOT_TOL:
        raise ValueError("partial fractions undefined for repeated roots")
    diff = lam[:, None] - lam[None, :]
    np.fill_diagonal(diff, 1.0)
    weights = 1.0 / np.prod(diff, axis=1)
    return PartialFractions(lam, weights)


def h2_norm(num, den: Polynomial | None = None, grid_size: int = H2_GRID_SIZE) -> float:
    """H2 norm of ``num(z)/den(z)``: root mean square over the unit circle.

    ``num`` may be a :class:`Polynomial`, a coefficient vector, or a matrix of
    coefficient vectors with shape (l_out, l_in, K); matrix numerators are
    measured in Frobenius norm. ``den=None`` means denominator one, in which
    case the result equals the Euclidean norm of the coefficients. Poles must
    be strictly inside the unit circle (magnitude <= 1 - 1e-6).
    """
    nc = num.coeffs if isinstance(num, Polynomial) else np.asarray(num, dtype=float)
    if den is not None and den.degree >= 1:
        mags = np.abs(roots(den))
        if mags.max() > 1.0 - 1e-6:
            raise ValueError(f"unstable system: pole magnitude {mags.max():.6g}")
    z = circle_grid(grid_size)
    vals = _polyval(nc, z)
    if den is not None:
        vals = vals / den(z)
    if vals.ndim > 1:
        sq = np.sum(np.abs(vals) ** 2, axis=tuple(range(vals.ndim - 1)))
    else:
        sq = np.abs(vals) ** 2
    return float(np.sqrt(sq.mean()))


def inverse_approx(p: Polynomial, degree: int) -> Polynomial:
    """Monic degree-``degree`` polynomial h with ``z^(n+d)/p(z) ~= h(z)`` on |z|=1.

    Built from the nonnegative-frequency Fourier coefficients of z^(n+d)/p(z),
    which are power sums of the partial-fraction weights. The sup error on the
    unit circle is at most ``gamma_quantity(p) * alpha^d / (1 - alpha)`` where
    alpha is the largest root magnitude. Requires distinct roots strictly
    inside the unit circle.
    """
    if degree < 0:
        raise ValueError("degree must be >= 0")
    lam, t = partial_fractions(p)
    alpha = float(np.abs(lam).max())
    if alpha >= 1.0 - 1e-12:
        raise ValueError("pole on or outside the unit circle")
    n = p.degree
    m = n + degree
    beta = np.empty(degree + 1)
    beta[degree] = 1.0
    for k in range(degree):
        val = np.sum(t * lam ** (m - k - 1))
        beta[k] = val.real
    return Polynomial(beta)


class SqrtExtension(NamedTuple):
    """Result of :func:`sqrt_extension`.

    ``u`` is the monic multiplier; ``tau`` are cone parameters certified on the
    evaluation grid for ``p(z)u(z)/z^(deg p + deg u)``; ``sqrt_deviation`` is
    the measured sup distance of that normalized product from the principal
    square root of ``p(z)/z^n`` on the grid.
    """

    u: Polynomial
    tau: tuple[float, float, float]
    sqrt_deviation: float
    grid_size: int


def sqrt_extension(p: Polynomial, cone, k_terms: int, grid_size: int = 512) -> SqrtExtension:
    """Monic multiplier u making ``p*u / z^deg(pu)`` land in the full cone.

    Requires ``p(z)/z^n`` to stay in the half cone (|w| <= tau2, Re w >= tau1,
    Re w >= tau0*|Im w|) on a ``grid_size`` unit-circle grid; ``cone`` is any
    object with tau0/tau1/tau2 attributes. The multiplier is the truncated
    binomial series of the inverse square root of ``p/(tau2 z^n)``, reversed
    into a polynomial of degree <= n*k_terms and normalized monic. Cone
    parameters achieved by the normalized product on the grid are measured and
    returned; certification failure (too few terms) raises.
    """
    if k_terms < 1:
        raise ValueError("k_terms must be >= 1")
    tau0, tau1, tau2 = float(cone.tau0), float(cone.tau1), float(cone.tau2)
    n = p.degree
    z = circle_grid(grid_size)
    v = p(z) / z**n
    half_ok = (np.abs(v) <= tau2) & (v.real >= tau1) & (v.real >= tau0 * np.abs(v.imag))
    if not half_ok.all():
        k = int(np.argmin(half_ok))
        raise ValueError(
            f"not strict-input passive on grid: p(z)/z^n = {v[k]:.6g} at grid index {k}"
        )

    # x(w) = p(z)/(tau2 z^n) - 1 as a polynomial in w = 1/z.
    q = p.coeffs[::-1] / tau2
    x = q.copy()
    x[0] -= 1.0
    h = np.array([1.0])
    term = np.array([1.0])
    binom = 1.0
    for j in range(1, k_terms + 1):
        binom *= (-0.5 - (j - 1)) / j
        term = npoly.polymul(term, x)
        h = npoly.polyadd(h, binom * term)
    padded = np.zeros(n * k_terms + 1)
    padded[: len(h)] = h
    lead = padded[0]  # u's leading coefficient is h(0)
    if abs(lead) < 1e-12:
        raise ValueError("degenerate extension: vanishing leading coefficient")
    u = Polynomial(padded[::-1] / lead)

    prod = v * _polyval(padded[::-1] / lead, z) / z ** u.degree
    re, im = prod.real, np.abs(prod.imag)
    re_min, re_max = float(re.min()), float(re.max())
    curved = im > 1e-15
    slope = float((re[curved] / im[curved]).min()) if curved.any() else np.inf
    if re_min <= 0.0 or slope <= 1.0:
        raise ValueError(
            f"cone certification failed (min Re {re_min:.4g}, min Re/|Im| {slope:.4g}); "
            "increase k_terms"
        )
    tau0_cert = (slope - 1.0) * (1.0 - 1e-9)
    tau1_cert = re_min * (1.0 - 1e-9)
    tau2_cert = re_max * (1.0 + 1e-9)
    deviation = float(np.abs(prod - np.sqrt(v)).max())
    return SqrtExtension(u, (tau0_cert, tau1_cert, tau2_cert), deviation, grid_size)
