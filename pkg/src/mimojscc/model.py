"""The transformer joint source-channel codec and its parameterization.

Layout conventions shared with :mod:`mimojscc.frontend`:

* a real sequence ``(l, 2*M*k/l)`` flattens row-major to an ``(M, 2k)`` grid
  whose first k columns are real parts and last k columns imaginary parts of
  the complex symbol block;
* the channel heatmap uses the same grid, holding half of each symbol's
  complex noise power in both of its real-component cells.

Everything that must carry gradients is expressed through
:mod:`mimojscc.autodiff` tensors; plain numpy handles the rest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, constant
from .frontend import HEATMAP_SENTINEL, CsiMode, zf_matrix
from .linalg import RngStream
from .optim import ParameterStore

__all__ = [
    "ModelConfig",
    "TINY_PROFILE",
    "PAPER_PROFILE",
    "ConfigError",
    "init_params",
    "patchify",
    "unpatchify",
    "pack_symbols",
    "unpack_symbols",
    "power_normalize",
    "encoder_forward",
    "decoder_forward",
    "residual_equalize",
    "mse_loss",
]

RESIDUAL_HIDDEN = 128  # hidden width of the post-ZF compensation network


class ConfigError(ValueError):
    """Inconsistent model or experiment configuration."""


@dataclass(frozen=True)
class ModelConfig:
    """Dimensions and mode switches for one encoder/decoder pair."""

    mode: CsiMode
    m_max: int
    k: int                     # channel uses per image
    p: int                     # patch grid side; l = p*p patches
    d: int                     # embedding width
    n_heads: int
    depth: int
    h: int
    w: int
    snr_lo: float = 10.0
    snr_hi: float = 10.0
    adaptive_m: bool = False
    d_mlp: int = 0             # 0 => 4*d
    sentinel: float = HEATMAP_SENTINEL
    ln_eps: float = 1e-5

    @property
    def l(self) -> int:
        return self.p * self.p

    @property
    def c(self) -> int:
        return 3 * self.h * self.w // self.l

    @property
    def sym_per_row(self) -> int:
        return 2 * self.m_max * self.k // self.l

    @property
    def n_source(self) -> int:
        return 3 * self.h * self.w

    @property
    def bandwidth_ratio(self) -> float:
        return self.k / self.n_source

    @property
    def d_head(self) -> int:
        return self.d // self.n_heads

    @property
    def mlp_width(self) -> int:
        return self.d_mlp if self.d_mlp else 4 * self.d

    def validate(self) -> "ModelConfig":
        if self.m_max < 1:
            raise ConfigError("antenna count must be >= 1")
        if self.h % self.p or self.w % self.p:
            raise ConfigError(f"patch grid {self.p} must divide image dims {self.h}x{self.w}")
        if (2 * self.m_max * self.k) % self.l:
            raise ConfigError(
                f"sequence length l={self.l} must divide 2*M*k={2 * self.m_max * self.k}"
            )
        if self.d % self.n_heads:
            raise ConfigError(f"embed dim {self.d} not divisible by {self.n_heads} heads")
        if self.snr_lo > self.snr_hi:
            raise ConfigError("snr range is inverted")
        if self.adaptive_m:
            if self.mode is not CsiMode.CSIT:
                raise ConfigError("adaptive antenna training requires the closed-loop mode")
            if self.m_max < 2:
                raise ConfigError("adaptive antenna training needs m_max >= 2")
        if self.k < 1 or self.d < 1 or self.depth < 1:
            raise ConfigError("k, d and depth must be positive")
        return self

    @property
    def encoder_in_width(self) -> int:
        if self.mode is CsiMode.CSIT:
            return self.c + self.sym_per_row
        return self.c


def _tiny(**over):
    base = dict(
        mode=CsiMode.CSIT, m_max=2, k=16, p=2, d=32, n_heads=2, depth=2, h=8, w=8
    )
    base.update(over)
    return base


TINY_PROFILE = _tiny()
PAPER_PROFILE = dict(
    mode=CsiMode.CSIT, m_max=2, k=256, p=8, d=256, n_heads=8, depth=8, h=32, w=32
)


# ---------------------------------------------------------------------------
# image <-> sequence and sequence <-> symbol transforms


def patchify(image: np.ndarray, p: int) -> np.ndarray:
    """Split an (h, w, 3) image into a row-major grid of p*p flattened patches."""
    image = np.asarray(image)
    h, w, ch = image.shape
    if ch != 3:
        raise ValueError("expected a 3-channel image")
    if h % p or w % p:
        raise ValueError(f"patch grid {p} must divide image dims {h}x{w}")
    hp, wp = h // p, w // p
    return (
        image.reshape(p, hp, p, wp, 3)
        .transpose(0, 2, 1, 3, 4)
        .reshape(p * p, hp * wp * 3)
    )


def unpatchify(seq: np.ndarray, p: int, h: int, w: int) -> np.ndarray:
    """Exact inverse of :func:`patchify`."""
    hp, wp = h // p, w // p
    return (
        np.asarray(seq)
        .reshape(p, p, hp, wp, 3)
        .transpose(0, 2, 1, 3, 4)
        .reshape(h, w, 3)
    )


def pack_symbols(z: np.ndarray, m: int, k: int) -> np.ndarray:
    """Row-major real sequence -> complex (M, k) block (real block then imag)."""
    z = np.asarray(z)
    if z.size != 2 * m * k:
        raise ValueError(f"expected {2 * m * k} real entries, got {z.size}")
    grid = z.reshape(m, 2 * k)
    return grid[:, :k] + 1j * grid[:, k:]


def unpack_symbols(x: np.ndarray, l: int) -> np.ndarray:
    """Complex (M, k) block -> real (l, 2*M*k/l) sequence; inverse of packing."""
    x = np.asarray(x, dtype=np.complex128)
    m, k = x.shape
    if (2 * m * k) % l:
        raise ValueError(f"sequence length {l} must divide 2*M*k={2 * m * k}")
    grid = np.concatenate([x.real, x.imag], axis=1)
    return grid.reshape(l, (2 * m * k) // l)


def power_normalize(x: Tensor, m: int, k: int) -> Tensor:
    """Scale a packed block so its average symbol power is exactly one.

    A zero block passes through untouched instead of dividing by zero; the
    scale is otherwise invariant to the input's magnitude.
    """
    ssq = ad.sum_all(ad.mul(x, x))
    if float(ssq.values) == 0.0:
        return x
    scale = ad.mul_scalar(ad.powc(ssq, -0.5), math.sqrt(m * k))
    return ad.mul(x, scale)


# ---------------------------------------------------------------------------
# parameter initialization


def _uniform(rng: RngStream, shape, fan_in: int) -> np.ndarray:
    return (2.0 * rng.uniform(shape) - 1.0) / math.sqrt(fan_in)


def init_params(cfg: ModelConfig, rng: RngStream) -> ParameterStore:
    """Fresh, seeded parameter store for the configured codec."""
    cfg.validate()
    store = ParameterStore()
    sym = cfg.sym_per_row
    d = cfg.d

    def add_transformer(prefix: str):
        for i in range(cfg.depth):
            pfx = f"{prefix}.l{i}"
            store.add(f"{pfx}.ln1.g", np.ones(d))
            store.add(f"{pfx}.ln1.b", np.zeros(d))
            for nm in ("wq", "wk", "wv", "wo"):
                store.add(f"{pfx}.{nm}", _uniform(rng, (d, d), d))
            store.add(f"{pfx}.ln2.g", np.ones(d))
            store.add(f"{pfx}.ln2.b", np.zeros(d))
            store.add(f"{pfx}.mlp.w1", _uniform(rng, (d, cfg.mlp_width), d))
            store.add(f"{pfx}.mlp.b1", np.zeros(cfg.mlp_width))
            store.add(f"{pfx}.mlp.w2", _uniform(rng, (cfg.mlp_width, d), cfg.mlp_width))
            store.add(f"{pfx}.mlp.b2", np.zeros(d))

    store.add("enc.w0", _uniform(rng, (cfg.encoder_in_width, d), cfg.encoder_in_width))
    store.add("enc.pe.w", _uniform(rng, (1, d), 1))
    store.add("enc.pe.b", np.zeros(d))
    add_transformer("enc")
    store.add("enc.wc", _uniform(rng, (d, sym), d))

    store.add("dec.siam.w1", _uniform(rng, (2 * sym, d), 2 * sym))
    store.add("dec.siam.b1", np.zeros(d))
    store.add("dec.siam.w2", _uniform(rng, (d, d), d))
    store.add("dec.siam.b2", np.zeros(d))
    store.add("dec.siam.wm", _uniform(rng, (2 * d, d), 2 * d))
    store.add("dec.siam.bm", np.zeros(d))
    store.add("dec.pe.w", _uniform(rng, (1, d), 1))
    store.add("dec.pe.b", np.zeros(d))
    add_transformer("dec")
    store.add("dec.wout", _uniform(rng, (d, cfg.c), d))
    store.add("dec.bout", np.zeros(cfg.c))

    if cfg.mode is CsiMode.CSIR:
        m = cfg.m_max
        fan = 2 * m * m + 2 * m
        store.add("res.w1", _uniform(rng, (fan, RESIDUAL_HIDDEN), fan))
        store.add("res.w2", _uniform(rng, (RESIDUAL_HIDDEN, 2 * m), RESIDUAL_HIDDEN))
        store.add("res.alpha", np.asarray(0.25))
    return store


# ---------------------------------------------------------------------------
# graph builders


def _positional(params, prefix: str, l: int, positions: np.ndarray | None) -> Tensor:
    if positions is None:
        positions = np.arange(l) / l
    pos = constant(np.asarray(positions, dtype=np.float64).reshape(l, 1))
    return ad.dense(pos, params[f"{prefix}.pe.w"], params[f"{prefix}.pe.b"])


def _transformer_layer(params, pfx: str, f: Tensor, cfg: ModelConfig) -> Tensor:
    u = ad.layer_norm(f, params[f"{pfx}.ln1.g"], params[f"{pfx}.ln1.b"], cfg.ln_eps)
    q_all = ad.matmul(u, params[f"{pfx}.wq"])
    k_all = ad.matmul(u, params[f"{pfx}.wk"])
    v_all = ad.matmul(u, params[f"{pfx}.wv"])
    ds = cfg.d_head
    heads = []
    for hh in range(cfg.n_heads):
        q = ad.narrow(q_all, 1, hh * ds, ds)
        kk = ad.narrow(k_all, 1, hh * ds, ds)
        vv = ad.narrow(v_all, 1, hh * ds, ds)
        scores = ad.mul_scalar(ad.matmul(q, ad.transpose(kk)), 1.0 / math.sqrt(cfg.d))
        heads.append(ad.matmul(ad.softmax_rows(scores), vv))
    attn_out = ad.matmul(ad.concat(heads, axis=1), params[f"{pfx}.wo"])
    a = ad.add(f, attn_out)
    v = ad.layer_norm(a, params[f"{pfx}.ln2.g"], params[f"{pfx}.ln2.b"], cfg.ln_eps)
    mlp = ad.dense(
        ad.gelu(ad.dense(v, params[f"{pfx}.mlp.w1"], params[f"{pfx}.mlp.b1"])),
        params[f"{pfx}.mlp.w2"],
        params[f"{pfx}.mlp.b2"],
    )
    return ad.add(a, mlp)


def _stack(params, prefix: str, x: Tensor, cfg: ModelConfig) -> Tensor:
    for i in range(cfg.depth):
        x = _transformer_layer(params, f"{prefix}.l{i}", x, cfg)
    return x


def encoder_forward(
    params,
    cfg: ModelConfig,
    s_seq: np.ndarray,
    heatmap: np.ndarray | None,
    positions: np.ndarray | None = None,
) -> Tensor:
    """Sequence (l, c) -> pre-normalization channel symbols (l, 2*M*k/l).

    In the closed loop the per-symbol noise heatmap rides along with the
    source tokens; in the open loop the transmitter is blind and the heatmap
    must not be supplied.
    """
    if cfg.mode is CsiMode.CSIT:
        if heatmap is None:
            raise ValueError("closed-loop encoder requires the channel heatmap")
        s_in = np.concatenate([s_seq, heatmap], axis=1)
    else:
        if heatmap is not None:
            raise ValueError("open-loop encoder input is the source sequence alone")
        s_in = np.asarray(s_seq)
    if s_in.shape != (cfg.l, cfg.encoder_in_width):
        raise ValueError(f"encoder input shape {s_in.shape} != {(cfg.l, cfg.encoder_in_width)}")
    f0 = ad.add(ad.matmul(constant(s_in), params["enc.w0"]), _positional(params, "enc", cfg.l, positions))
    f = _stack(params, "enc", f0, cfg)
    return ad.matmul(f, params["enc.wc"])


def decoder_forward(
    params,
    cfg: ModelConfig,
    xprime_seq: Tensor,
    heatmap: np.ndarray,
    positions: np.ndarray | None = None,
) -> Tensor:
    """Equalized sequence plus heatmap -> reconstructed patch sequence (l, c).

    The signed pair (+input, -input) runs through one weight-shared
    projection stack; a linear layer merges the two branches before the
    positional embedding and the transformer stack.
    """
    if xprime_seq.values.shape != (cfg.l, cfg.sym_per_row):
        raise ValueError(
            f"decoder input shape {xprime_seq.values.shape} != {(cfg.l, cfg.sym_per_row)}"
        )
    sd = ad.concat([xprime_seq, constant(np.asarray(heatmap))], axis=1)

    def branch(t: Tensor) -> Tensor:
        h1 = ad.gelu(ad.dense(t, params["dec.siam.w1"], params["dec.siam.b1"]))
        return ad.gelu(ad.dense(h1, params["dec.siam.w2"], params["dec.siam.b2"]))

    merged = ad.dense(
        ad.concat([branch(sd), branch(ad.neg(sd))], axis=1),
        params["dec.siam.wm"],
        params["dec.siam.bm"],
    )
    d0 = ad.add(merged, _positional(params, "dec", cfg.l, positions))
    dl = _stack(params, "dec", d0, cfg)
    return ad.dense(dl, params["dec.wout"], params["dec.bout"])


def _columnize_index(m: int, k: int) -> np.ndarray:
    """Flat index mapping packed (M, 2k) -> per-use rows (k, 2M)."""
    idx = np.empty((k, 2 * m), dtype=np.int64)
    for j in range(k):
        for t in range(2 * m):
            if t < m:
                idx[j, t] = t * 2 * k + j
            else:
                idx[j, t] = (t - m) * 2 * k + k + j
    return idx.reshape(-1)


def _packize_index(m: int, k: int) -> np.ndarray:
    """Flat index mapping per-use rows (k, 2M) -> packed (M, 2k)."""
    idx = np.empty((m, 2 * k), dtype=np.int64)
    for i in range(m):
        for j in range(2 * k):
            if j < k:
                idx[i, j] = j * 2 * m + i
            else:
                idx[i, j] = (j - k) * 2 * m + m + i
    return idx.reshape(-1)


def residual_equalize(params, y_packed: Tensor, h_est: np.ndarray, k: int) -> Tensor:
    """Zero-forcing equalization plus a learned per-use compensation.

    The compensation network sees, for every channel use, the realified
    estimated gains (all 2*M^2 components) concatenated with that use's
    realified received vector, and adds its 2*M real outputs back onto the
    zero-forced estimate. Zero weights therefore reproduce plain ZF exactly.
    """
    m = h_est.shape[0]
    hw = zf_matrix(h_est)
    zf_branch = ad.complex_left_multiply(hw, y_packed, k)

    cols = ad.gather_flat(y_packed, _columnize_index(m, k), (k, 2 * m))
    hfeat = np.concatenate([h_est.real.reshape(-1), h_est.imag.reshape(-1)])
    htile = constant(np.tile(hfeat, (k, 1)))
    hidden = ad.prelu(ad.matmul(ad.concat([htile, cols], axis=1), params["res.w1"]), params["res.alpha"])
    comp_cols = ad.matmul(hidden, params["res.w2"])
    comp = ad.gather_flat(comp_cols, _packize_index(m, k), (m, 2 * k))
    return ad.add(zf_branch, comp)


def mse_loss(s: np.ndarray, s_hat: np.ndarray) -> float:
    """Mean squared error over all source entries."""
    s = np.asarray(s, dtype=np.float64)
    s_hat = np.asarray(s_hat, dtype=np.float64)
    if s.shape != s_hat.shape:
        raise ValueError(f"shape mismatch: {s.shape} vs {s_hat.shape}")
    return float(np.mean((s - s_hat) ** 2))
