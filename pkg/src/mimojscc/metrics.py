"""Distortion metrics."""

from __future__ import annotations

import numpy as np

__all__ = ["psnr"]

PSNR_CAP_DB = 100.0


def psnr(s: np.ndarray, s_hat: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, capped at 100 dB for a zero MSE."""
    s = np.asarray(s, dtype=np.float64)
    s_hat = np.asarray(s_hat, dtype=np.float64)
    if s.shape != s_hat.shape:
        raise ValueError(f"shape mismatch: {s.shape} vs {s_hat.shape}")
    if peak <= 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean((s - s_hat) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return float(min(10.0 * np.log10(peak * peak / mse), PSNR_CAP_DB))
