"""Complex-matrix primitives and seeded random sampling.

Complex matrices are plain 2-D ``numpy`` arrays of ``complex128`` in row-major
order. Everything else in the package builds on the handful of operations
here, so the numerics are deliberately conservative: singular values come from
a one-sided Jacobi iteration (robust for the small antenna counts we care
about), and random draws come from a counter-based generator so that any
(seed, stream) pair reproduces bit-identical sequences on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DimensionError",
    "ConvergenceError",
    "SvdFactors",
    "RngStream",
    "complex_svd",
    "pseudo_inverse_diag",
    "frobenius_norm_sq",
    "sample_complex_gaussian",
]

_MASK64 = 0xFFFFFFFFFFFFFFFF

# Largest matrix side the SVD path accepts; the simulator never needs more
# antennas than this, and the Jacobi sweep count is tuned for small sizes.
MAX_SVD_DIM = 8

_JACOBI_TOL = 1e-14
_JACOBI_MAX_SWEEPS = 200


class DimensionError(ValueError):
    """Input matrix has the wrong shape for the requested operation."""


class ConvergenceError(ArithmeticError):
    """Iterative routine failed to converge within its iteration cap."""


@dataclass(frozen=True)
class SvdFactors:
    """Factors of ``a = u @ diag(s) @ v.conj().T`` with ``s`` descending.

    ``u`` and ``v`` are square unitary matrices; ``s`` is a real non-negative
    vector sorted in descending order. The phase of each column of ``u`` is
    fixed so its largest-magnitude entry is real and non-negative, which makes
    the factorization deterministic.
    """

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.v.conj().T


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


class RngStream:
    """Counter-based random stream addressed by (seed, stream-id).

    Backed by the Philox generator keyed with the pair, so equal pairs give
    bit-identical sequences across runs and platforms. Only uniform doubles
    are drawn from the underlying generator; every other distribution in the
    package is derived from them explicitly. Streams are cheap: derive one
    per concurrent task instead of sharing.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        self._gen = np.random.Generator(
            np.random.Philox(key=np.array([self.seed, self.stream_id], dtype=np.uint64))
        )

    def derive(self, child: int) -> "RngStream":
        """Deterministically split off an independent child stream."""
        if child < 0:
            raise ValueError("child index must be non-negative")
        new_id = _splitmix64(self.stream_id ^ _splitmix64(child)) & _MASK64
        return RngStream(self.seed, new_id)

    def uniform(self, shape=()) -> np.ndarray:
        """Uniform float64 draws in [0, 1)."""
        return self._gen.random(size=shape)

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        """Uniform integers in [low, high), mapped from uniform doubles."""
        if high <= low:
            raise ValueError("empty integer range")
        u = self._gen.random(size=shape)
        out = (low + np.floor(u * (high - low))).astype(np.int64)
        return np.minimum(out, high - 1)

    def __repr__(self) -> str:  # pragma: no cover
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def _as_complex_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got ndim={a.ndim}")
    return a


def frobenius_norm_sq(a) -> float:
    """Sum of squared entry magnitudes."""
    a = _as_complex_matrix(a)
    return float(np.sum(np.abs(a) ** 2))


def pseudo_inverse_diag(s, tol: float = 1e-12) -> np.ndarray:
    """Elementwise pseudo-inverse of a non-negative vector.

    Entries above ``tol * max(s)`` are inverted; the rest map to zero. With
    ``max(s) == 0`` everything is zero, so degenerate inputs never raise.
    """
    s = np.asarray(s, dtype=np.float64)
    if np.any(s < 0):
        raise ValueError("singular values must be non-negative")
    smax = s.max() if s.size else 0.0
    out = np.zeros_like(s)
    keep = s > tol * smax
    out[keep] = 1.0 / s[keep]
    return out


def _jacobi_rotation(alpha: float, beta: float, c: complex):
    """2x2 unitary zeroing the off-diagonal of [[alpha, c], [conj(c), beta]].

    Returns the matrix applied on the right of the column pair. The complex
    phase of ``c`` is folded into the second column first, then a real Jacobi
    rotation annihilates the (now real) coupling.
    """
    phase = c / abs(c)
    tau = (beta - alpha) / (2.0 * abs(c))
    if tau >= 0:
        t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
    else:
        t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
    cs = 1.0 / np.sqrt(1.0 + t * t)
    sn = cs * t
    rot = np.array([[cs, sn], [-sn, cs]], dtype=np.complex128)
    d = np.array([[1.0, 0.0], [0.0, np.conj(phase)]], dtype=np.complex128)
    return d @ rot


def complex_svd(a) -> SvdFactors:
    """Singular value decomposition of a small square complex matrix.

    One-sided Jacobi: unitary rotations are applied to column pairs until all
    pairs are orthogonal (normalized inner product below 1e-14), capped at 200
    sweeps. Column norms then give the singular values; exactly-zero columns
    are completed to a unitary basis by Gram-Schmidt against the rest.
    """
    a = _as_complex_matrix(a)
    m, n = a.shape
    if m != n:
        raise DimensionError(f"SVD path requires a square matrix, got {m}x{n}")
    if m > MAX_SVD_DIM:
        raise DimensionError(f"SVD path limited to side <= {MAX_SVD_DIM}, got {m}")
    if m == 0:
        raise DimensionError("empty matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")

    w = a.copy()
    v = np.eye(n, dtype=np.complex128)
    for _ in range(_JACOBI_MAX_SWEEPS):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                cp = w[:, p]
                cq = w[:, q]
                alpha = float(np.real(np.vdot(cp, cp)))
                beta = float(np.real(np.vdot(cq, cq)))
                c = complex(np.vdot(cp, cq))
                if alpha == 0.0 or beta == 0.0:
                    continue
                if abs(c) <= _JACOBI_TOL * np.sqrt(alpha * beta):
                    continue
                rot = _jacobi_rotation(alpha, beta, c)
                w[:, [p, q]] = w[:, [p, q]] @ rot
                v[:, [p, q]] = v[:, [p, q]] @ rot
                rotated = True
        if not rotated:
            break
    else:
        raise ConvergenceError(
            f"Jacobi SVD did not converge within {_JACOBI_MAX_SWEEPS} sweeps"
        )

    s = np.sqrt(np.sum(np.abs(w) ** 2, axis=0))
    order = np.argsort(-s, kind="stable")
    s = s[order]
    w = w[:, order]
    v = v[:, order]

    u = np.zeros_like(w)
    nonzero = s > 0.0
    u[:, nonzero] = w[:, nonzero] / s[nonzero]
    if not np.all(nonzero):
        u = _complete_basis(u, np.flatnonzero(~nonzero))

    # Phase convention: largest-magnitude entry of each u column made real
    # and non-negative; v absorbs the same phase so the product is unchanged.
    for j in range(n):
        i = int(np.argmax(np.abs(u[:, j])))
        entry = u[i, j]
        if abs(entry) > 0:
            phase = np.conj(entry) / abs(entry)
            u[:, j] *= phase
            v[:, j] *= phase
            u[i, j] = abs(u[i, j].real) + 0.0j
    return SvdFactors(u=u, s=s, v=v)


def _complete_basis(u: np.ndarray, missing: np.ndarray) -> np.ndarray:
    """Fill zero columns of ``u`` with unit vectors orthogonal to the rest."""
    n = u.shape[0]
    u = u.copy()
    have = [j for j in range(n) if j not in set(missing.tolist())]
    for j in missing:
        for t in range(n):
            cand = np.zeros(n, dtype=np.complex128)
            cand[t] = 1.0
            for _ in range(2):  # re-orthogonalize once for accuracy
                for k in have:
                    cand -= np.vdot(u[:, k], cand) * u[:, k]
            norm = np.linalg.norm(cand)
            if norm > 0.5:
                u[:, j] = cand / norm
                have.append(j)
                break
        else:  # pragma: no cover - cannot happen for n <= MAX_SVD_DIM
            raise ConvergenceError("failed to complete unitary basis")
    return u


def sample_complex_gaussian(rng: RngStream, rows: int, cols: int, variance: float) -> np.ndarray:
    """i.i.d. circularly-symmetric complex Gaussian entries.

    Per-entry variance is ``variance`` (real and imaginary parts carry half
    each). Sampling is Box-Muller on the stream's uniform doubles, so the
    draw sequence is fully documented and platform independent.
    """
    if variance < 0:
        raise ValueError(f"variance must be non-negative, got {variance}")
    u1 = rng.uniform((rows, cols))
    u2 = rng.uniform((rows, cols))
    # 1 - u1 lies in (0, 1], keeping the log finite.
    r = np.sqrt(-variance * np.log1p(-u1))
    return r * np.exp(2j * np.pi * u2)
