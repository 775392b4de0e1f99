"""State-space systems in controllable canonical form, simulation, transfer functions.

A system of order n is the triple (a, C, D): ``a`` holds the characteristic
coefficients (a_1, ..., a_n) of the transition matrix, C maps the stacked state
to outputs, D is the feedthrough. The transition matrix is the companion matrix
CC(a) (last row -a_n ... -a_1, ones on the superdiagonal), tensored with an
identity for multi-input systems, and the input matrix is fixed to the last
block row, so it is never a trainable quantity. Simulation and impulse
responses apply the companion structure directly (shift plus one dot product
per step) instead of materializing the transition matrix.

Output timing: y_t reads the state accumulated from inputs x_1..x_{t-1}, so

    y_t = D x_t + sum_{k<t} C A^(t-k-1) B x_k + C A^(t-1) h_0 + xi_t.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass


import numpy as np

from .poly import Polynomial, char_poly, coeffs_to_a, h2_norm, roots

#: Materializing A is allowed below this state dimension (only done on request).
_DENSE_STATE_LIMIT = 64


def companion(a: np.ndarray) -> np.ndarray:
    """Companion matrix with last row ``[-a_n, ..., -a_1]`` and superdiagonal ones."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    n = len(a)
    A = np.zeros((n, n))
    if n > 1:
        A[np.arange(n - 1), np.arange(1, n)] = 1.0
    A[-1, :] = -a[::-1]
    return A


def mimo_companion(a: np.ndarray, l_in: int) -> np.ndarray:
    """Block companion ``CC(a) (x) I_{l_in}`` (identity blocks on the superdiagonal)."""
    if l_in < 1:
        raise ValueError("l_in must be >= 1")
    return np.kron(companion(a), np.eye(l_in))


def input_matrix(n: int, l_in: int = 1) -> np.ndarray:
    """The fixed input matrix ``e_n (x) I_{l_in}``."""
    B = np.zeros((n * l_in, l_in))
    B[(n - 1) * l_in :, :] = np.eye(l_in)
    return B


def _advance(a: np.ndarray, states: np.ndarray, x: np.ndarray | None = None) -> np.ndarray:
    """One transition step on states shaped (..., n, l_in), companion-structured."""
    last = -np.einsum("m,...ml->...l", a, states[..., ::-1, :])
    if x is not None:
        last = last + x
    return np.concatenate([states[..., 1:, :], last[..., None, :]], axis=-2)


def _advance_adjoint(a: np.ndarray, states: np.ndarray) -> np.ndarray:
    """Transpose-transition step on states shaped (..., n, l_in)."""
    out = np.zeros_like(states)
    out[..., 1:, :] = states[..., :-1, :]
    out -= np.einsum("m,...l->...ml", a[::-1], states[..., -1, :])
    return out


@dataclass(frozen=True, eq=False)
class SystemParams:
    """Learnable system (a, C, D); arrays are frozen on construction.

    a : (n,)           characteristic coefficients (a_1, ..., a_n)
    C : (l_out, n*l_in) output map on the stacked state
    D : (l_out, l_in)   feedthrough
    """

    a: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self) -> None:
        a = np.atleast_1d(np.asarray(self.a, dtype=float)).copy()
        C = np.atleast_2d(np.asarray(self.C, dtype=float)).copy()
        D = np.atleast_2d(np.asarray(self.D, dtype=float)).copy()
        n = len(a)
        if n < 1:
            raise ValueError("order must be >= 1")
        l_out, l_in = D.shape
        if C.shape != (l_out, n * l_in):
            raise ValueError(
                f"C has shape {C.shape}, expected {(l_out, n * l_in)} from n={n}, D={D.shape}"
            )
        for arr in (a, C, D):
            arr.flags.writeable = False
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @classmethod
    def siso(cls, a, c, d: float = 0.0) -> "SystemParams":
        a = np.atleast_1d(np.asarray(a, dtype=float))
        c = np.atleast_1d(np.asarray(c, dtype=float))
        return cls(a, c.reshape(1, -1), np.array([[float(d)]]))

    @property
    def n(self) -> int:
        return len(self.a)

    @property
    def l_in(self) -> int:
        return self.D.shape[1]

    @property
    def l_out(self) -> int:
        return self.D.shape[0]

    def c_blocks(self) -> np.ndarray:
        """C reshaped to (n, l_out, l_in); block j multiplies state block j."""
        return self.C.reshape(self.l_out, self.n, self.l_in).swapaxes(0, 1)

    def transition_matrix(self) -> np.ndarray:
        """Dense A, for inspection and small-scale oracles only."""
        if self.n * self.l_in > _DENSE_STATE_LIMIT:
            raise ValueError("state dimension too large to materialize A")
        return mimo_companion(self.a, self.l_in)


def spectral_radius(system_or_a) -> float:
    """Largest root magnitude of the characteristic polynomial."""
    a = system_or_a.a if isinstance(system_or_a, SystemParams) else np.asarray(system_or_a)
    return float(np.abs(roots(char_poly(a))).max())


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One input/output pair; x is (T, l_in), y is (T, l_out).

    ``h0`` records the initial state when it is known (None otherwise) and
    ``noise_sigma`` the output-noise standard deviation used to generate y.
    Arrays are frozen; trajectories are safe to share across workers.
    """

    x: np.ndarray
    y: np.ndarray
    h0: np.ndarray | None = None
    noise_sigma: float = 0.0

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        x = (x[:, None] if x.ndim == 1 else x).copy()
        y = (y[:, None] if y.ndim == 1 else y).copy()
        if len(x) != len(y) or len(x) < 1:
            raise ValueError("x and y must have equal length T >= 1")
        h0 = self.h0
        if h0 is not None:
            h0 = np.asarray(h0, dtype=float).reshape(-1).copy()
            h0.flags.writeable = False
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "h0", h0)

    @property
    def T(self) -> int:
        return len(self.x)

    @property
    def l_in(self) -> int:
        return self.x.shape[1]

    @property
    def l_out(self) -> int:
        return self.y.shape[1]


def simulate(
    system: SystemParams,
    x: np.ndarray,
    h0: np.ndarray | None = None,
    noise: float | np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> Trajectory:
    """Run the system on inputs x of shape (T, l_in).

    ``noise`` is either an explicit (T, l_out) disturbance matrix, a scalar
    standard deviation for Gaussian output noise (requires ``rng``), or None.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    T, l_in = x.shape
    if l_in != system.l_in:
        raise ValueError(f"input width {l_in} does not match system l_in={system.l_in}")
    n, l_out = system.n, system.l_out
    if h0 is None:
        s = np.zeros((n, l_in))
    else:
        h0 = np.asarray(h0, dtype=float).reshape(-1)
        if h0.size != n * l_in:
            raise ValueError(f"h0 has size {h0.size}, expected {n * l_in}")
        s = h0.reshape(n, l_in).copy()

    sigma = 0.0
    if noise is None:
        xi = None
    elif np.isscalar(noise):
        sigma = float(noise)
        if sigma < 0:
            raise ValueError("noise standard deviation must be >= 0")
        if sigma > 0 and rng is None:
            raise ValueError("gaussian noise requires an rng")
        xi = sigma * rng.standard_normal((T, l_out)) if sigma > 0 else None
    else:
        xi = np.asarray(noise, dtype=float)
        if xi.ndim == 1:
            xi = xi[:, None]
        if xi.shape != (T, l_out):
            raise ValueError(f"noise has shape {xi.shape}, expected {(T, l_out)}")
        sigma = float("nan")

    y = np.empty((T, l_out))
    for t in range(T):
        y[t] = system.C @ s.reshape(-1) + system.D @ x[t]
        s = _advance(system.a, s, x[t])
    if xi is not None:
        y += xi
    return Trajectory(x, y, h0=h0, noise_sigma=sigma)


def impulse_response(system: SystemParams, horizon: int) -> np.ndarray:
    """Markov parameters ``r_k = C A^k B`` for k = 0..horizon-1, shape (K, l_out, l_in).

    Computed by iterated structured products; A^k is never formed.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    n, l_in, l_out = system.n, system.l_in, system.l_out
    # One state per input column of B, batch axis first for _advance.
    V = np.zeros((l_in, n, l_in))
    V[:, -1, :] = np.eye(l_in)
    out = np.empty((horizon, l_out, l_in))
    C = system.C
    for k in range(horizon):
        out[k] = (V.reshape(l_in, n * l_in) @ C.T).T
        V = _advance(system.a, V)
    return out


@dataclass(frozen=True, eq=False)
class TransferFunction:
    """Rational transfer data: numerator coefficient tensor over a monic denominator.

    ``num`` has shape (l_out, l_in, n) with entry [o, i, k] the coefficient of
    z^k; ``den`` is monic of degree n. Only the strictly proper part lives
    here; feedthrough is carried separately by :class:`SystemParams`.
    """

    num: np.ndarray
    den: Polynomial

    def __post_init__(self) -> None:
        num = np.asarray(self.num, dtype=float)
        if num.ndim == 1:
            num = num[None, None, :]
        if num.ndim != 3:
            raise ValueError("numerator must have shape (l_out, l_in, n)")
        n = self.den.degree
        if n < 1:
            raise ValueError("denominator degree must be >= 1")
        if not self.den.is_monic():
            raise ValueError("denominator must be monic")
        if num.shape[2] > n:
            raise ValueError("improper transfer function: numerator degree too high")
        if num.shape[2] < n:
            pad = np.zeros(num.shape[:2] + (n - num.shape[2],))
            num = np.concatenate([num, pad], axis=2)
        num = num.copy()
        num.flags.writeable = False
        object.__setattr__(self, "num", num)

    @property
    def l_out(self) -> int:
        return self.num.shape[0]

    @property
    def l_in(self) -> int:
        return self.num.shape[1]

    def num_poly(self) -> Polynomial:
        """Numerator as a scalar polynomial (single-input single-output only)."""
        if self.num.shape[:2] != (1, 1):
            raise ValueError("num_poly is defined for SISO transfer functions")
        return Polynomial(self.num[0, 0]) if self.num[0, 0].any() else Polynomial([0.0])

    def __call__(self, z):
        zz = np.asarray(z, dtype=complex)
        num = np.zeros(zz.shape + self.num.shape[:2], dtype=complex)
        for k in range(self.num.shape[2] - 1, -1, -1):
            num = num * zz[..., None, None] + self.num[:, :, k]
        return num / self.den(zz)[..., None, None]

    def h2_norm(self, grid_size: int = 4096) -> float:
        return h2_norm(self.num, self.den, grid_size=grid_size)


def transfer_eval(system: SystemParams, z, include_feedthrough: bool = False):
    """Transfer matrix ``C (zI - A)^{-1} B`` at z (scalar or array).

    The strictly proper part only, unless ``include_feedthrough`` adds D.
    Evaluating at a characteristic root raises.
    """
    zz = np.asarray(z, dtype=complex)
    p = char_poly(system.a)
    pz = p(zz)
    scale = (1.0 + np.abs(zz)) ** system.n
    if np.any(np.abs(pz) < 1e-12 * scale):
        raise ValueError("pole: characteristic polynomial vanishes at z")
    blocks = system.c_blocks()  # (n, l_out, l_in); block j carries z^j
    num = np.zeros(zz.shape + (system.l_out, system.l_in), dtype=complex)
    for j in range(system.n - 1, -1, -1):
        num = num * zz[..., None, None] + blocks[j]
    out = num / pz[..., None, None]
    if include_feedthrough:
        out = out + system.D
    return out


def to_transfer(system: SystemParams) -> TransferFunction:
    """Numerator/denominator form; a pure coefficient relabeling."""
    num = system.c_blocks().transpose(1, 2, 0)  # (l_out, l_in, n)
    return TransferFunction(num, char_poly(system.a))


def from_transfer(num, den: Polynomial, D=0.0) -> SystemParams:
    """System realizing ``num/den + D``; inverse of :func:`to_transfer`.

    ``num`` is a Polynomial (SISO) or an array (l_out, l_in, <= n); ``den``
    must be monic with degree exceeding the numerator degree.
    """
    a = coeffs_to_a(den)
    n = len(a)
    if isinstance(num, Polynomial):
        if num.is_zero():
            arr = np.zeros((1, 1, n))
        else:
            if num.degree > n - 1:
                raise ValueError("improper transfer function")
            arr = np.zeros((1, 1, n))
            arr[0, 0, : num.degree + 1] = num.coeffs
    else:
        arr = np.asarray(num, dtype=float)
        if arr.ndim == 1:
            arr = arr[None, None, :]
        if arr.shape[2] > n:
            raise ValueError("improper transfer function")
        pad = np.zeros(arr.shape[:2] + (n - arr.shape[2],))
        arr = np.concatenate([arr, pad], axis=2)
    l_out, l_in = arr.shape[:2]
    C = arr.transpose(0, 2, 1).reshape(l_out, n * l_in)
    D = np.atleast_2d(np.asarray(D, dtype=float))
    if D.shape == (1, 1) and (l_out, l_in) != (1, 1):
        D = np.full((l_out, l_in), D[0, 0])
    return SystemParams(a, C, D)


# ---------------------------------------------------------------------------
# Serialization


def system_to_json(system: SystemParams) -> dict:
    return {
        "n": system.n,
        "l_in": system.l_in,
        "l_out": system.l_out,
        "a": [float(v) for v in system.a],
        "C": [float(v) for v in system.C.reshape(-1)],
        "D": [float(v) for v in system.D.reshape(-1)],
    }


def system_from_json(data: dict) -> SystemParams:
    n, l_in, l_out = int(data["n"]), int(data["l_in"]), int(data["l_out"])
    return SystemParams(
        np.asarray(data["a"], dtype=float),
        np.asarray(data["C"], dtype=float).reshape(l_out, n * l_in),
        np.asarray(data["D"], dtype=float).reshape(l_out, l_in),
    )


def save_system(system: SystemParams, path) -> None:
    with open(path, "w") as fh:
        json.dump(system_to_json(system), fh, indent=2)
        fh.write("\n")


def load_system(path) -> SystemParams:
    with open(path) as fh:
        return system_from_json(json.load(fh))


def trajectory_to_csv(traj: Trajectory, path_or_file) -> None:
    """Columns t, x_1.., y_1..; floats printed with 17 significant digits."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        writer = csv.writer(fh)
        header = (
            ["t"]
            + [f"x_{i+1}" for i in range(traj.l_in)]
            + [f"y_{j+1}" for j in range(traj.l_out)]
        )
        writer.writerow(header)
        for t in range(traj.T):
            row = [t + 1]
            row += [format(v, ".17g") for v in traj.x[t]]
            row += [format(v, ".17g") for v in traj.y[t]]
            writer.writerow(row)
    finally:
        if own:
            fh.close()


def trajectory_from_csv(path_or_file, h0=None, noise_sigma: float = 0.0) -> Trajectory:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, newline="") if own else path_or_file
    try:
        reader = csv.reader(fh)
        header = next(reader)
        l_in = sum(1 for h in header if h.startswith("x_"))
        rows = [[float(v) for v in row[1:]] for row in reader if row]
    finally:
        if own:
            fh.close()
    arr = np.asarray(rows)
    return Trajectory(arr[:, :l_in], arr[:, l_in:], h0=h0, noise_sigma=noise_sigma)


_BIN_MAGIC = b"LDSTRAJ1"


def trajectory_to_bytes(traj: Trajectory) -> bytes:
    """Binary column format: 16-byte header (magic, T, l_in, l_out), then
    float64 columns of x and y, then noise_sigma and the optional h0.
    """
    buf = io.BytesIO()
    buf.write(_BIN_MAGIC)
    buf.write(struct.pack("<IHH", traj.T, traj.l_in, traj.l_out))
    for col in range(traj.l_in):
        buf.write(np.ascontiguousarray(traj.x[:, col]).tobytes())
    for col in range(traj.l_out):
        buf.write(np.ascontiguousarray(traj.y[:, col]).tobytes())
    buf.write(struct.pack("<d", traj.noise_sigma))
    if traj.h0 is None:
        buf.write(struct.pack("<I", 0))
    else:
        buf.write(struct.pack("<I", traj.h0.size))
        buf.write(np.ascontiguousarray(traj.h0).tobytes())
    return buf.getvalue()


def trajectory_from_bytes(data: bytes) -> Trajectory:
    if data[:8] != _BIN_MAGIC:
        raise ValueError("bad magic: not a trajectory blob")
    T, l_in, l_out = struct.unpack("<IHH", data[8:16])
    off = 16
    cols = []
    for _ in range(l_in + l_out):
        cols.append(np.frombuffer(data, dtype="<f8", count=T, offset=off))
        off += 8 * T
    x = np.stack(cols[:l_in], axis=1)
    y = np.stack(cols[l_in:], axis=1)
    (sigma,) = struct.unpack("<d", data[off : off + 8])
    off += 8
    (h0_size,) = struct.unpack("<I", data[off : off + 4])
    off += 4
    h0 = None
    if h0_size:
        h0 = np.frombuffer(data, dtype="<f8", count=h0_size, offset=off).copy()
    return Trajectory(x, y, h0=h0, noise_sigma=sigma)


def save_trajectory_bin(traj: Trajectory, path) -> None:
    with open(path, "wb") as fh:
        fh.write(trajectory_to_bytes(traj))


def load_trajectory_bin(path) -> Trajectory:
    with open(path, "rb") as fh:
        return trajectory_from_bytes(fh.read())
