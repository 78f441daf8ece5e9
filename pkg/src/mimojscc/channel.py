"""MIMO block-fading channel: sampling, transmission, and SNR bookkeeping.

One channel realization is held constant for the k uses spanning a single
image and resampled for the next. The receiver-side estimate ``h_est`` may be
corrupted by an additive complex Gaussian error of variance ``sigma_e2``; the
true gains are consumed only by :func:`transmit`, everything downstream works
from the estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import RngStream, frobenius_norm_sq, sample_complex_gaussian

__all__ = [
    "ChannelRealization",
    "snr_to_noise_variance",
    "noise_variance_to_snr",
    "sample_channel",
    "transmit",
    "verify_power",
]


@dataclass(frozen=True)
class ChannelRealization:
    """One block-fading draw: true gains, noise level, and the estimate."""

    h: np.ndarray          # true M x M gains, unit entry variance
    sigma_w2: float        # noise variance per complex output entry
    h_est: np.ndarray      # estimate available to both ends
    sigma_e2: float        # estimation-error variance (0 => h_est is h)

    @property
    def m(self) -> int:
        return self.h.shape[0]


def snr_to_noise_variance(mu_db: float, m: int) -> float:
    """Noise variance for a target SNR, ``sigma_w2 = M * 10**(-mu/10)``.

    The SNR convention measures total received signal power over total noise
    power for unit-power inputs and unit-variance gains, which makes the map
    depend on the antenna count.
    """
    if m < 1:
        raise ValueError("antenna count must be >= 1")
    return float(m) * 10.0 ** (-mu_db / 10.0)


def noise_variance_to_snr(sigma_w2: float, m: int) -> float:
    """Inverse of :func:`snr_to_noise_variance`."""
    if m < 1:
        raise ValueError("antenna count must be >= 1")
    if sigma_w2 <= 0:
        raise ValueError("noise variance must be positive")
    return 10.0 * np.log10(m / sigma_w2)


def sample_channel(rng: RngStream, m: int, sigma_w2: float, sigma_e2: float = 0.0) -> ChannelRealization:
    """Draw an M x M Rayleigh realization plus its (possibly noisy) estimate."""
    if m < 1:
        raise ValueError("antenna count must be >= 1")
    if sigma_w2 < 0 or sigma_e2 < 0:
        raise ValueError("variances must be non-negative")
    h = sample_complex_gaussian(rng, m, m, 1.0)
    if sigma_e2 > 0:
        h_est = h + sample_complex_gaussian(rng, m, m, sigma_e2)
    else:
        h_est = h
    return ChannelRealization(h=h, sigma_w2=float(sigma_w2), h_est=h_est, sigma_e2=float(sigma_e2))


def transmit(rng: RngStream, x: np.ndarray, ch: ChannelRealization) -> np.ndarray:
    """Propagate a symbol block: ``Y = H X + W`` with i.i.d. CN(0, sigma_w2) noise."""
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 2 or x.shape[0] != ch.m:
        raise ValueError(f"symbol block must be {ch.m} x k, got shape {x.shape}")
    y = ch.h @ x
    if ch.sigma_w2 > 0:
        y = y + sample_complex_gaussian(rng, x.shape[0], x.shape[1], ch.sigma_w2)
    return y


def verify_power(x: np.ndarray) -> float:
    """Average per-entry power of a symbol block, ``|X|_F^2 / (M k)``."""
    x = np.asarray(x)
    if x.size == 0:
        return 0.0
    return frobenius_norm_sq(x) / x.size
