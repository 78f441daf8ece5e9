"""Separation-based comparison: channel capacity spent on a codec's RD curve.

The bound assumes capacity-achieving channel codes: each channel realization
yields a bit budget (capacity times channel uses), and the codec's best
rate-distortion point inside the budget is selected. It is an upper bound on
any practical separate source/channel design built on the same codec.

The bundled codec is an 8x8 block-DCT ladder (keep the first m zigzag
coefficients, uniform fixed-length quantization at b bits each); an adapter
for an external command-line compressor is provided but disabled by default.
"""

from __future__ import annotations

import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization
from .frontend import CsiMode, capacity_closed_loop, capacity_open_loop
from .linalg import complex_svd
from .metrics import psnr

__all__ = [
    "RdPoint",
    "ToyDctCodec",
    "ExternalCodec",
    "select_bound_psnr",
    "mean_color_psnr",
    "separation_bound_psnr",
]

BLOCK = 8
COEFF_LADDER = (1, 2, 4, 8, 16, 32, 64)
BITS_LADDER = (2, 4, 8)


@dataclass(frozen=True)
class RdPoint:
    """One operating point of a codec: rate in bits per pixel, quality in dB."""

    bpp: float
    psnr_db: float


def _dct_matrix(n: int = BLOCK) -> np.ndarray:
    i = np.arange(n)
    mat = np.cos(np.pi * (2 * i[None, :] + 1) * i[:, None] / (2 * n)) * np.sqrt(2.0 / n)
    mat[0, :] = np.sqrt(1.0 / n)
    return mat


_DCT = _dct_matrix()


def _zigzag_order(n: int = BLOCK) -> np.ndarray:
    """Flat indices of an n x n block in zigzag scan order."""
    order = sorted(
        ((i, j) for i in range(n) for j in range(n)),
        key=lambda ij: (ij[0] + ij[1], ij[1] if (ij[0] + ij[1]) % 2 else ij[0]),
    )
    return np.array([i * n + j for i, j in order], dtype=np.int64)


_ZIGZAG = _zigzag_order()


def _quantize_block(coef: np.ndarray, m_keep: int, bits: int) -> np.ndarray:
    """Keep the first ``m_keep`` zigzag coefficients at ``bits`` bits each.

    The DC coefficient lives in [0, 8] for unit-range inputs and gets a
    midtread quantizer over that range; AC coefficients are bounded by 8 in
    magnitude and use a symmetric midtread with zero as an exact level, so
    vanished coefficients reconstruct to exactly zero.
    """
    flat = coef.reshape(-1)
    out = np.zeros_like(flat)
    kept = _ZIGZAG[:m_keep]
    levels = 2**bits
    for rank, idx in enumerate(kept):
        v = flat[idx]
        if rank == 0 and idx == 0:  # DC
            delta = BLOCK / (levels - 1)
            q = np.clip(np.round(v / delta), 0, levels - 1)
            out[idx] = q * delta
        else:
            delta = 2.0 * BLOCK / levels
            q = np.clip(np.round(v / delta), -(levels // 2), levels // 2 - 1)
            out[idx] = q * delta
    return out.reshape(coef.shape)


class ToyDctCodec:
    """Fixed-ladder block-DCT codec exposing a deterministic RD curve."""

    def rd_curve(self, image: np.ndarray) -> list[RdPoint]:
        image = np.asarray(image, dtype=np.float64)
        h, w, _ = image.shape
        if h % BLOCK or w % BLOCK:
            raise ValueError(f"image dims must be multiples of {BLOCK}, got {h}x{w}")
        raw = []
        for m_keep in COEFF_LADDER:
            for bits in BITS_LADDER:
                recon = self._code(image, m_keep, bits)
                bpp = 3.0 * m_keep * bits / (BLOCK * BLOCK)
                raw.append(RdPoint(bpp=bpp, psnr_db=psnr(image, recon)))
        # Deduplicate equal rates keeping the best quality, then prune to the
        # monotone frontier so quality never decreases along the curve.
        best_at = {}
        for pt in raw:
            if pt.bpp not in best_at or pt.psnr_db > best_at[pt.bpp]:
                best_at[pt.bpp] = pt.psnr_db
        curve = []
        running = -np.inf
        for bpp in sorted(best_at):
            running = max(running, best_at[bpp])
            curve.append(RdPoint(bpp=bpp, psnr_db=running))
        return curve

    @staticmethod
    def _code(image: np.ndarray, m_keep: int, bits: int) -> np.ndarray:
        h, w, _ = image.shape
        recon = np.empty_like(image)
        for c in range(3):
            for bi in range(0, h, BLOCK):
                for bj in range(0, w, BLOCK):
                    block = image[bi : bi + BLOCK, bj : bj + BLOCK, c]
                    coef = _DCT @ block @ _DCT.T
                    deq = _quantize_block(coef, m_keep, bits)
                    recon[bi : bi + BLOCK, bj : bj + BLOCK, c] = _DCT.T @ deq @ _DCT
        return np.clip(recon, 0.0, 1.0)


class ExternalCodec:
    """Adapter invoking a user-supplied command-line compressor.

    ``compress_cmd`` and ``decode_cmd`` are shell templates with ``{input}``,
    ``{output}`` and (for compression) ``{quality}`` placeholders. The
    compressed file's size on disk defines the rate; the decode step must
    produce a PNG reconstruction.
    """

    def __init__(self, compress_cmd: str, decode_cmd: str, qualities: list):
        self.compress_cmd = compress_cmd
        self.decode_cmd = decode_cmd
        self.qualities = list(qualities)

    def rd_curve(self, image: np.ndarray) -> list[RdPoint]:
        from PIL import Image

        image = np.asarray(image, dtype=np.float64)
        h, w, _ = image.shape
        raw = []
        with tempfile.TemporaryDirectory() as tmp:
            src = os.path.join(tmp, "in.png")
            Image.fromarray((np.clip(image, 0, 1) * 255).round().astype(np.uint8)).save(src)
            for q in self.qualities:
                packed = os.path.join(tmp, f"c{q}.bin")
                back = os.path.join(tmp, f"d{q}.png")
                self._run(self.compress_cmd.format(input=src, output=packed, quality=q))
                self._run(self.decode_cmd.format(input=packed, output=back))
                nbytes = os.path.getsize(packed)
                recon = np.asarray(Image.open(back).convert("RGB"), dtype=np.float64) / 255.0
                raw.append(RdPoint(bpp=8.0 * nbytes / (h * w), psnr_db=psnr(image, recon)))
        raw.sort(key=lambda pt: pt.bpp)
        curve, running = [], -np.inf
        for pt in raw:
            if curve and pt.bpp == curve[-1].bpp:
                continue
            running = max(running, pt.psnr_db)
            curve.append(RdPoint(bpp=pt.bpp, psnr_db=running))
        return curve

    @staticmethod
    def _run(cmd: str):
        proc = subprocess.run(shlex.split(cmd), capture_output=True)
        if proc.returncode != 0:
            raise RuntimeError(f"external codec failed: {cmd}\n{proc.stderr.decode(errors='replace')}")


def mean_color_psnr(image: np.ndarray) -> float:
    """Quality of the zero-rate reconstruction: each channel at its mean."""
    image = np.asarray(image, dtype=np.float64)
    recon = np.broadcast_to(image.mean(axis=(0, 1)), image.shape)
    return psnr(image, recon)


def select_bound_psnr(curve: list[RdPoint], bpp_budget: float, floor_psnr: float) -> float:
    """Quality of the highest-rate point inside the budget, or the floor."""
    best = floor_psnr
    for pt in curve:
        if pt.bpp <= bpp_budget:
            best = pt.psnr_db
        else:
            break
    return best


def separation_bound_psnr(
    image: np.ndarray,
    ch: ChannelRealization,
    r: float,
    mode: CsiMode,
    codec=None,
) -> float:
    """Upper-bound PSNR of a separate source/channel design on one realization.

    Capacity (open loop: equal power; closed loop: water-filling with unit
    per-antenna budget) times the channel uses gives the bit budget, which
    buys the best codec point that fits. If nothing fits, the zero-rate
    mean-color reconstruction is the floor.
    """
    image = np.asarray(image, dtype=np.float64)
    h, w, _ = image.shape
    k_float = r * 3 * h * w
    k = round(k_float)
    if abs(k_float - k) > 1e-9:
        raise ValueError(f"bandwidth ratio {r} gives non-integral channel uses {k_float}")
    codec = codec or ToyDctCodec()
    if mode is CsiMode.CSIT:
        cap = capacity_closed_loop(complex_svd(ch.h).s, ch.sigma_w2)
    else:
        cap = capacity_open_loop(ch.h, ch.sigma_w2)
    bpp_budget = k * cap / (h * w)
    return select_bound_psnr(codec.rd_curve(image), bpp_budget, mean_color_psnr(image))
