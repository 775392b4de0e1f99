"""Independent oracles the tests check library code against.

Everything here is deliberately written the slow, obvious way (cofactor
determinants, power sums, explicit matrix powers, fixed-point root iteration)
so that agreement with the library is evidence, not tautology.
"""

from __future__ import annotations

import numpy as np


def poly_mul(p, q):
    return np.convolve(p, q)


def poly_add(p, q):
    n = max(len(p), len(q))
    out = np.zeros(n)
    out[: len(p)] += p
    out[: len(q)] += q
    return out


def cofactor_char_poly(A: np.ndarray) -> np.ndarray:
    """Coefficients (constant first) of det(zI - A) by cofactor expansion.

    Entries of zI - A are degree <= 1 polynomials; the recursion is exponential
    in n, fine for the small orders it is used at.
    """
    n = A.shape[0]
    entries = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            const = -A[i, j]
            lin = 1.0 if i == j else 0.0
            entries[i][j] = np.array([const, lin])

    def det(rows, cols):
        if len(rows) == 1:
            return entries[rows[0]][cols[0]]
        total = np.zeros(1)
        r = rows[0]
        for k, c in enumerate(cols):
            minor = det(rows[1:], cols[:k] + cols[k + 1 :])
            term = poly_mul(entries[r][c], minor)
            total = poly_add(total, term if k % 2 == 0 else -term)
        return total

    return det(list(range(n)), list(range(n)))


def durand_kerner(coeffs: np.ndarray, iterations: int = 200) -> np.ndarray:
    """Simultaneous fixed-point root iteration, constant-first coefficients."""
    c = np.asarray(coeffs, dtype=complex)
    c = c / c[-1]
    n = len(c) - 1
    guess = (0.4 + 0.9j) ** np.arange(n)
    for _ in range(iterations):
        vals = np.polyval(c[::-1], guess)
        diffs = guess[:, None] - guess[None, :]
        np.fill_diagonal(diffs, 1.0)
        guess = guess - vals / np.prod(diffs, axis=1)
    return guess


def power_sum_eval(coeffs, z):
    """Naive term-by-term polynomial evaluation."""
    return sum(c * z**k for k, c in enumerate(coeffs))


def brute_gamma(roots: np.ndarray) -> float:
    """Root-separation quantity by explicit product loops."""
    roots = np.asarray(roots, dtype=complex)
    n = len(roots)
    total = 0.0
    for j in range(n):
        prod = 1.0 + 0.0j
        for i in range(n):
            if i != j:
                prod *= roots[i] - roots[j]
        total += abs(roots[j] ** n / prod)
    return total


def closed_form_outputs(A, B, C, D, x, h0=None, xi=None):
    """Outputs via explicit matrix powers: y_t = D x_t + sum_{k<t} C A^(t-k-1) B x_k
    + C A^(t-1) h0 + xi_t."""
    T = len(x)
    l_out = C.shape[0]
    n = A.shape[0]
    if h0 is None:
        h0 = np.zeros(n)
    powers = [np.eye(n)]
    for _ in range(T):
        powers.append(powers[-1] @ A)
    y = np.zeros((T, l_out))
    for t in range(1, T + 1):
        acc = D @ x[t - 1]
        for k in range(1, t):
            acc = acc + C @ powers[t - k - 1] @ B @ x[k - 1]
        acc = acc + C @ powers[t - 1] @ h0
        if xi is not None:
            acc = acc + xi[t - 1]
        y[t - 1] = acc
    return y


def fd_gradient(f, arr: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of one array argument."""
    g = np.zeros_like(arr, dtype=float)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = arr[idx]
        arr[idx] = old + step
        fp = f()
        arr[idx] = old - step
        fm = f()
        arr[idx] = old
        g[idx] = (fp - fm) / (2.0 * step)
    return g


def multiset_distance(a, b) -> float:
    """Greedy matching distance between two complex multisets of equal size."""
    a = list(np.asarray(a, dtype=complex))
    b = list(np.asarray(b, dtype=complex))
    assert len(a) == len(b)
    worst = 0.0
    for val in a:
        dists = [abs(val - other) for other in b]
        k = int(np.argmin(dists))
        worst = max(worst, dists[k])
        b.pop(k)
    return worst


def random_stable_roots(rng, degree, radius=0.9, min_sep=0.05):
    """Conjugate-closed, pairwise separated roots inside the given radius."""
    while True:
        n_real = degree % 2
        n_pairs = degree // 2
        roots = []
        for _ in range(n_pairs):
            r = rng.uniform(0.1, radius)
            th = rng.uniform(0.05, np.pi - 0.05)
            roots.extend([r * np.exp(1j * th), r * np.exp(-1j * th)])
        for _ in range(n_real):
            roots.append(complex(rng.uniform(-radius, radius)))
        roots = np.array(roots)
        diff = np.abs(roots[:, None] - roots[None, :])
        np.fill_diagonal(diff, np.inf)
        if diff.min() > min_sep:
            return roots
