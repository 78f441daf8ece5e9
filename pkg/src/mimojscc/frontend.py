"""Classical MIMO front-end: equalizers, precoding, noise heatmaps, water-filling.

All functions are pure and operate on plain numpy arrays. The two CSI modes
share one packing convention (real block then imaginary block per antenna row)
with :mod:`mimojscc.model`; the heatmap builder and the symbol packer must
never drift apart, so both live on top of the same row-major reshape.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .linalg import SvdFactors, complex_svd, pseudo_inverse_diag

__all__ = [
    "CsiMode",
    "IllConditionedError",
    "Heatmap",
    "PowerAllocation",
    "HEATMAP_SENTINEL",
    "SENTINEL_NOISE_POWER",
    "zf_matrix",
    "mmse_matrix",
    "svd_precode",
    "svd_equalize",
    "noise_power_csir",
    "noise_power_csit",
    "build_heatmap",
    "water_filling",
    "capacity_open_loop",
    "capacity_closed_loop",
]

# Heatmap cell value flagging a subchannel that carries no usable signal
# (zero singular value, or an antenna padded in below the maximum count).
# Finite and large: downstream networks can be trained through it.
HEATMAP_SENTINEL = 1e3
# The heatmap stores half of a symbol's complex noise power per real
# component, so the per-antenna noise-power sentinel is twice the cell value.
SENTINEL_NOISE_POWER = 2.0 * HEATMAP_SENTINEL

_COND_RAISE = 1e12


class CsiMode(enum.Enum):
    """Where channel state information is available."""

    CSIR = "csir"  # receiver only: zero-forcing based open loop
    CSIT = "csit"  # both ends: SVD precoding closed loop

    def __str__(self) -> str:  # pragma: no cover
        return self.value


class IllConditionedError(ArithmeticError):
    """Channel matrix condition number too large to invert reliably."""

    def __init__(self, condition: float):
        super().__init__(f"channel matrix ill-conditioned (condition ~ {condition:.3e})")
        self.condition = condition


Heatmap = np.ndarray  # real l x (2*M*k/l), per-real-component noise powers


@dataclass(frozen=True)
class PowerAllocation:
    """Per-subchannel transmit powers plus the common water level."""

    p: np.ndarray
    water_level: float


def zf_matrix(h: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Zero-forcing equalizer ``(H^H H)^-1 H^H``, computed through the SVD.

    Raises :class:`IllConditionedError` when the condition number reaches
    1e12; below that the tolerance-guarded pseudo-inverse keeps the result
    finite even for nearly dead subchannels.
    """
    f = complex_svd(h)
    smin = f.s[-1]
    cond = np.inf if smin == 0 else f.s[0] / smin
    if cond >= _COND_RAISE:
        raise IllConditionedError(float(cond))
    return (f.v * pseudo_inverse_diag(f.s, tol)) @ f.u.conj().T


def mmse_matrix(h: np.ndarray, sigma_w2: float) -> np.ndarray:
    """Linear MMSE equalizer ``H^H (H H^H + sigma_w2 I)^-1``.

    Evaluated as ``V diag(s / (s^2 + sigma_w2)) U^H``, which stays finite for
    any input: the noise variance regularizes, and a zero singular value with
    zero noise falls back to the pseudo-inverse limit.
    """
    if sigma_w2 < 0:
        raise ValueError("noise variance must be non-negative")
    f = complex_svd(h)
    denom = f.s**2 + sigma_w2
    gains = np.divide(f.s, denom, out=np.zeros_like(f.s), where=denom > 0)
    return (f.v * gains) @ f.u.conj().T


def svd_precode(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Right-singular-vector precoding ``V @ X`` (power preserving)."""
    x = np.asarray(x, dtype=np.complex128)
    v = np.asarray(v, dtype=np.complex128)
    if v.shape[0] != v.shape[1] or v.shape[1] != x.shape[0]:
        raise ValueError(f"precoder {v.shape} does not match block {x.shape}")
    return v @ x


def svd_equalize(y: np.ndarray, factors: SvdFactors, tol: float = 1e-12) -> np.ndarray:
    """Subchannel equalization ``Sigma^+ U^H Y``.

    Rows belonging to below-tolerance singular values come out zero (the
    pseudo-inverse masks them) instead of blowing up.
    """
    y = np.asarray(y, dtype=np.complex128)
    sinv = pseudo_inverse_diag(factors.s, tol)
    return sinv[:, None] * (factors.u.conj().T @ y)


def noise_power_csir(h_est: np.ndarray, sigma_w2: float, tol: float = 1e-12) -> np.ndarray:
    """Per-antenna complex noise power after zero-forcing equalization.

    Entry i is ``sigma_w2 * sum_j |H_w[i, j]|^2``: the variance of row i of
    ``H_w W``, constant across the block's channel uses.
    """
    hw = zf_matrix(h_est, tol)
    return sigma_w2 * np.sum(np.abs(hw) ** 2, axis=1)


def noise_power_csit(
    s: np.ndarray,
    sigma_w2: float,
    tol: float = 1e-12,
    sentinel: float = SENTINEL_NOISE_POWER,
) -> np.ndarray:
    """Per-subchannel complex noise power after SVD equalization.

    ``sigma_w2 / s_i^2`` for usable subchannels; dead ones (at or below the
    relative tolerance) take the finite sentinel instead of infinity.
    """
    s = np.asarray(s, dtype=np.float64)
    smax = s.max() if s.size else 0.0
    out = np.full(s.shape, float(sentinel))
    keep = s > tol * smax
    out[keep] = sigma_w2 / s[keep] ** 2
    return out


def build_heatmap(p_n: np.ndarray, l: int, k: int) -> Heatmap:
    """Spread per-antenna noise powers over the packed symbol layout.

    Lays out an M x 2k matrix whose first k columns hold half the complex
    noise power (real parts) and last k columns the same (imaginary parts),
    then reshapes row-major to l x (2*M*k/l). The bijection is identical to
    the symbol packing in :func:`mimojscc.model.pack_symbols`, so cell (i, j)
    of the heatmap describes exactly the real component that lands there.
    """
    p_n = np.asarray(p_n, dtype=np.float64)
    m = p_n.shape[0]
    if (2 * m * k) % l != 0:
        raise ValueError(f"sequence length {l} must divide 2*M*k = {2 * m * k}")
    grid = np.empty((m, 2 * k), dtype=np.float64)
    grid[:, :k] = 0.5 * p_n[:, None]
    grid[:, k:] = 0.5 * p_n[:, None]
    return grid.reshape(l, (2 * m * k) // l)


def water_filling(s: np.ndarray, sigma_w2: float, p_total: float) -> PowerAllocation:
    """Capacity-optimal power split over parallel subchannels.

    Bisection on the water level over ``[min g, max g + p_total]`` with
    ``g_i = sigma_w2 / s_i^2`` (200 iterations, budget tolerance 1e-12),
    followed by an exact solve on the identified active set so the returned
    budget and KKT residuals are tight to machine precision. Zero-gain
    subchannels receive zero power.
    """
    s = np.asarray(s, dtype=np.float64)
    if p_total <= 0:
        raise ValueError("power budget must be positive")
    usable = s > 0
    if not np.any(usable):
        raise ValueError("all subchannel gains are zero; water-filling undefined")
    g = np.full(s.shape, np.inf)
    g[usable] = sigma_w2 / s[usable] ** 2

    gu = g[usable]
    lo, hi = float(gu.min()), float(gu.max()) + p_total

    def budget(mu: float) -> float:
        return float(np.sum(np.maximum(0.0, mu - gu)))

    mu = hi
    for _ in range(200):
        mu = 0.5 * (lo + hi)
        b = budget(mu)
        if abs(b - p_total) <= 1e-12:
            break
        if b > p_total:
            hi = mu
        else:
            lo = mu

    # Exact water level for the active set the bisection has localized.
    active = gu < mu
    if not np.any(active):
        active = gu == gu.min()
    mu = (p_total + float(np.sum(gu[active]))) / int(np.sum(active))

    p = np.maximum(0.0, mu - g)
    p[~usable] = 0.0
    return PowerAllocation(p=p, water_level=float(mu))


def capacity_open_loop(h: np.ndarray, sigma_w2: float) -> float:
    """Equal-power MIMO capacity ``log2 det(I + H H^H / sigma_w2)`` in bits/use."""
    f = complex_svd(h)
    if sigma_w2 == 0:
        return np.inf if np.any(f.s > 0) else 0.0
    return float(np.sum(np.log2(1.0 + f.s**2 / sigma_w2)))


def capacity_closed_loop(s: np.ndarray, sigma_w2: float, p_total: float | None = None) -> float:
    """Water-filling capacity over the subchannel gains, in bits/use.

    The default budget equals the antenna count (unit power per antenna), the
    same total radiated power as the equal-power open loop, so closed-loop
    capacity always dominates.
    """
    s = np.asarray(s, dtype=np.float64)
    if p_total is None:
        p_total = float(s.shape[0])
    if sigma_w2 == 0:
        return np.inf if np.any(s > 0) else 0.0
    alloc = water_filling(s, sigma_w2, p_total)
    return float(np.sum(np.log2(1.0 + alloc.p * s**2 / sigma_w2)))
