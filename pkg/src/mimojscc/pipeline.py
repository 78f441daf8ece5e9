"""End-to-end transmission graphs, training, and evaluation.

One transmission is a single differentiable graph: patch sequence ->
encoder -> power normalization -> (closed loop: precoding) -> channel ->
equalization -> decoder -> loss. The channel realization and noise draw are
constants of the graph, so gradients flow through the affine channel map.

Every run is reproducible from (config, seed): channel, noise and batch
draws all come from streams derived deterministically per (step, image) or
(image, channel-draw) index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, constant
from .channel import ChannelRealization, sample_channel, snr_to_noise_variance
from .frontend import (
    CsiMode,
    build_heatmap,
    noise_power_csir,
    noise_power_csit,
)
from .linalg import RngStream, complex_svd, pseudo_inverse_diag, sample_complex_gaussian
from .metrics import psnr
from .model import (
    ModelConfig,
    decoder_forward,
    encoder_forward,
    init_params,
    patchify,
    power_normalize,
    residual_equalize,
    unpatchify,
)
from .optim import AdamState, ParameterStore, adam_step

__all__ = [
    "PowerConstraintError",
    "TrainSettings",
    "make_channel_sampler",
    "fixed_channel_sampler",
    "transmission",
    "transmission_loss",
    "train_step",
    "train",
    "evaluate_model",
    "gradcheck_suite",
]

POWER_TOL = 1e-6


class PowerConstraintError(AssertionError):
    """A transmitted block violated the unit average-power constraint."""


def make_channel_sampler(snr_lo: float, snr_hi: float, sigma_e2: float = 0.0):
    """Sampler drawing one block-fading realization per image.

    The SNR is drawn uniformly from [snr_lo, snr_hi] (a degenerate range is
    exactly the fixed value — the draw still happens, so the stream layout
    does not depend on whether the range is degenerate).
    """

    def sampler(rng: RngStream, m: int) -> ChannelRealization:
        u = float(rng.uniform(()))
        snr_db = snr_lo + u * (snr_hi - snr_lo)
        sigma_w2 = snr_to_noise_variance(snr_db, m)
        return sample_channel(rng, m, sigma_w2, sigma_e2)

    return sampler


def fixed_channel_sampler(h: np.ndarray, sigma_w2: float):
    """Sampler pinning the gains and noise level (diagnostic runs)."""
    h = np.asarray(h, dtype=np.complex128)

    def sampler(rng: RngStream, m: int) -> ChannelRealization:
        if m != h.shape[0]:
            raise ValueError("fixed channel has the wrong antenna count")
        return ChannelRealization(h=h, sigma_w2=float(sigma_w2), h_est=h, sigma_e2=0.0)

    return sampler


def _pack_const(x: np.ndarray) -> np.ndarray:
    return np.concatenate([x.real, x.imag], axis=1)


@dataclass
class TransmissionResult:
    out_seq: Tensor            # decoder output, (l, c), unclamped
    tx_power: float            # measured average power of the transmitted block
    x_packed: np.ndarray       # transmitted block (packed real), post-normalization
    xprime_packed: np.ndarray  # equalized block handed to the decoder (packed real)


def transmission(
    params,
    cfg: ModelConfig,
    image: np.ndarray,
    ch: ChannelRealization,
    rng: RngStream,
    m_use: int | None = None,
) -> TransmissionResult:
    """Build the full differentiable transmission graph for one image.

    ``m_use`` below ``cfg.m_max`` (adaptive-antenna operation) transmits only
    the first ``m_use`` antenna rows; the receiver zero-pads back to full
    size and the heatmap rows of padded antennas carry the sentinel. At
    ``m_use == m_max`` the padding machinery is a no-op and the graph is the
    plain fixed-antenna pipeline.
    """
    m = cfg.m_max if m_use is None else int(m_use)
    if m < 1 or m > cfg.m_max:
        raise ValueError(f"m_use must lie in [1, {cfg.m_max}]")
    if m < cfg.m_max and not cfg.adaptive_m:
        raise ValueError("reduced antenna count requires an adaptive-antenna model")
    if ch.m != m:
        raise ValueError(f"channel is {ch.m}x{ch.m} but m_use={m}")
    k, l = cfg.k, cfg.l

    # Receiver-side (and, closed loop, transmitter-side) CSI quantities come
    # from the estimate; the true gains appear only in the channel itself.
    if cfg.mode is CsiMode.CSIT:
        factors = complex_svd(ch.h_est)
        p_n = noise_power_csit(factors.s, ch.sigma_w2, sentinel=2.0 * cfg.sentinel)
    else:
        factors = None
        p_n = noise_power_csir(ch.h_est, ch.sigma_w2)
    if m < cfg.m_max:
        p_n = np.concatenate([p_n, np.full(cfg.m_max - m, 2.0 * cfg.sentinel)])
    heatmap = build_heatmap(p_n, l, k)

    s_seq = patchify(image, cfg.p)
    z_e = encoder_forward(params, cfg, s_seq, heatmap if cfg.mode is CsiMode.CSIT else None)
    packed_full = ad.reshape(z_e, (cfg.m_max, 2 * k))
    tx = ad.narrow(packed_full, 0, 0, m) if m < cfg.m_max else packed_full
    xb = power_normalize(tx, m, k)

    ssq = float(np.sum(xb.values**2))
    tx_power = ssq / (m * k)
    if ssq > 0.0 and abs(tx_power - 1.0) > POWER_TOL:
        raise PowerConstraintError(f"transmit power {tx_power} outside 1 +/- {POWER_TOL}")

    if cfg.mode is CsiMode.CSIT:
        sent = ad.complex_left_multiply(factors.v, xb, k)
    else:
        sent = xb
    y = ad.complex_left_multiply(ch.h, sent, k)
    if ch.sigma_w2 > 0:
        w = sample_complex_gaussian(rng, m, k, ch.sigma_w2)
        y = ad.add(y, constant(_pack_const(w)))

    if cfg.mode is CsiMode.CSIT:
        eq = pseudo_inverse_diag(factors.s)[:, None] * factors.u.conj().T
        xprime = ad.complex_left_multiply(eq, y, k)
    else:
        xprime = residual_equalize(params, y, ch.h_est, k)
    if m < cfg.m_max:
        xprime = ad.pad_rows(xprime, cfg.m_max)

    xprime_seq = ad.reshape(xprime, (l, cfg.sym_per_row))
    out_seq = decoder_forward(params, cfg, xprime_seq, heatmap)
    return TransmissionResult(
        out_seq=out_seq,
        tx_power=tx_power,
        x_packed=xb.values.copy(),
        xprime_packed=xprime.values.copy(),
    )


def transmission_loss(
    params,
    cfg: ModelConfig,
    image: np.ndarray,
    ch: ChannelRealization,
    rng: RngStream,
    m_use: int | None = None,
) -> tuple[Tensor, TransmissionResult]:
    """Scalar MSE loss graph for one transmission (patch-domain, unclamped)."""
    res = transmission(params, cfg, image, ch, rng, m_use)
    target = patchify(image, cfg.p)
    return ad.mse_against(res.out_seq, target), res


def _draw_m(cfg: ModelConfig, rng: RngStream) -> int:
    if not cfg.adaptive_m:
        return cfg.m_max
    return int(rng.integers(2, cfg.m_max + 1, ()))


def train_step(
    params: ParameterStore,
    adam: AdamState,
    cfg: ModelConfig,
    batch: list,
    sampler,
    rng: RngStream,
    power_log: list | None = None,
) -> float:
    """One optimizer step over a batch; channel and noise resampled per image."""
    losses = []
    for i, image in enumerate(batch):
        r = rng.derive(i)
        m_use = _draw_m(cfg, r)
        ch = sampler(r, m_use)
        loss, res = transmission_loss(params, cfg, image, ch, r, m_use)
        if power_log is not None:
            power_log.append(res.tx_power)
        losses.append(loss)
    total = losses[0]
    for extra in losses[1:]:
        total = ad.add(total, extra)
    total = ad.mul_scalar(total, 1.0 / len(losses))
    total.backward()
    adam_step(params, adam)
    return float(total.values)


@dataclass
class TrainSettings:
    """Knobs for a training run; defaults follow the reference recipe."""

    steps: int = 5000
    batch_size: int = 8
    lr: float = 5e-5
    eval_every: int = 200
    patience: int = 10          # evaluations without improvement before stopping
    min_improvement_db: float = 0.01
    val_snr_db: float | None = None  # None => midpoint of the training range
    val_draws: int = 4
    sigma_e2: float = 0.0


def _frozen_view(params) -> dict:
    """Gradient-free view sharing the parameter arrays (fast forward passes)."""
    return {name: Tensor(t.values) for name, t in params.items()}


def train(
    cfg: ModelConfig,
    settings: TrainSettings,
    train_images: list,
    val_images: list,
    rng: RngStream,
    sampler=None,
) -> tuple[ParameterStore, list[dict]]:
    """Train a codec pair; returns the best-validation parameters and history.

    Early stopping: after ``patience`` validation rounds without at least
    ``min_improvement_db`` of PSNR gain over the best seen, training stops
    and the best parameters are returned.
    """
    cfg.validate()
    if not train_images:
        raise ValueError("training set is empty")
    if not val_images:
        val_images = train_images
    if sampler is None:
        sampler = make_channel_sampler(cfg.snr_lo, cfg.snr_hi, settings.sigma_e2)
    val_snr = settings.val_snr_db
    if val_snr is None:
        val_snr = 0.5 * (cfg.snr_lo + cfg.snr_hi)

    params = init_params(cfg, rng.derive(0))
    adam = AdamState(lr=settings.lr)
    batch_rng = rng.derive(1)
    step_rng = rng.derive(2)
    val_rng = rng.derive(3)

    history: list[dict] = []
    best_psnr = -np.inf
    best_params = params.copy()
    stale = 0
    loss_acc: list[float] = []

    n = len(train_images)
    for step in range(1, settings.steps + 1):
        idx = batch_rng.derive(step).integers(0, n, (settings.batch_size,))
        batch = [train_images[int(i)] for i in idx]
        loss = train_step(params, adam, cfg, batch, sampler, step_rng.derive(step))
        loss_acc.append(loss)

        if step % settings.eval_every == 0 or step == settings.steps:
            mean_psnr, _ = evaluate_model(
                params,
                cfg,
                val_images,
                val_snr,
                settings.val_draws,
                val_rng,
                sigma_e2=settings.sigma_e2,
            )
            history.append(
                {"step": step, "loss": float(np.mean(loss_acc)), "val_psnr": mean_psnr}
            )
            loss_acc = []
            if mean_psnr >= best_psnr + settings.min_improvement_db:
                best_psnr = mean_psnr
                best_params = params.copy()
                stale = 0
            else:
                stale += 1
                if stale >= settings.patience:
                    break
    return best_params, history


def evaluate_model(
    params,
    cfg: ModelConfig,
    images: list,
    snr_db: float,
    n_channel_draws: int,
    rng: RngStream,
    sigma_e2: float = 0.0,
    m_use: int | None = None,
    peak_mode: str = "fixed",
) -> tuple[float, float]:
    """Mean and standard deviation of PSNR over images x channel draws.

    Deterministic given the stream: item (i, j) always uses the stream
    derived from (image index i, draw index j), so results are independent
    of evaluation order.
    """
    m = cfg.m_max if m_use is None else int(m_use)
    frozen = _frozen_view(params)
    sigma_w2 = snr_to_noise_variance(snr_db, m)
    values = []
    for i, image in enumerate(images):
        img_rng = rng.derive(i)
        for j in range(n_channel_draws):
            r = img_rng.derive(j)
            ch = sample_channel(r, m, sigma_w2, sigma_e2)
            res = transmission(frozen, cfg, image, ch, r, m_use=m)
            recon = np.clip(res.out_seq.values, 0.0, 1.0)
            recon_img = unpatchify(recon, cfg.p, cfg.h, cfg.w)
            peak = float(np.max(np.abs(image))) if peak_mode == "per_image" else 1.0
            values.append(psnr(image, recon_img, peak=peak))
    arr = np.asarray(values)
    return float(arr.mean()), float(arr.std())


def gradcheck_suite(cfg_overrides: dict | None = None, h: float = 1e-6, seed: int = 11) -> dict:
    """Finite-difference check of the full pipeline in both CSI modes.

    Builds a tiny 64-bit model per mode, freezes one channel and noise draw,
    and compares analytic gradients of the end-to-end loss against central
    differences on sampled coordinates of every parameter. Returns the max
    relative error per mode.
    """
    from .model import TINY_PROFILE  # local to avoid cycles at import time

    results = {}
    for mode in (CsiMode.CSIR, CsiMode.CSIT):
        profile = dict(TINY_PROFILE)
        profile.update(cfg_overrides or {})
        profile["mode"] = mode
        cfg = ModelConfig(**profile).validate()
        rng = RngStream(seed, 0)
        params = init_params(cfg, rng.derive(0))
        img_rng = rng.derive(1)
        image = img_rng.uniform((cfg.h, cfg.w, 3))
        ch = sample_channel(rng.derive(2), cfg.m_max, snr_to_noise_variance(10.0, cfg.m_max))
        noise_stream_id = rng.derive(3).stream_id

        def build_loss(cfg=cfg, params=params, image=image, ch=ch, sid=noise_stream_id):
            loss, _ = transmission_loss(params, cfg, image, ch, RngStream(seed, sid))
            return loss

        results[mode.value] = ad.gradient_check(build_loss, params.items(), h=h)
    return results
