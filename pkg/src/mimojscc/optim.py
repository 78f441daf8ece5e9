"""Parameter storage, the Adam optimizer, and binary checkpoints.

The checkpoint wire format is fixed: a 7-byte magic string ``DJSCCM1``, a
little-endian u32 schema version and parameter count, then per parameter the
u32 name length, UTF-8 name, u32 rank, u32 dimensions, and the raw
little-endian float32 values in row-major order. Values kept in float64 in
memory round through float32 on save.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor

__all__ = [
    "ParameterStore",
    "AdamState",
    "adam_step",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
]

MAGIC = b"DJSCCM1"
SCHEMA_VERSION = 1


class CheckpointError(ValueError):
    """Checkpoint bytes do not conform to the wire format."""


class ParameterStore:
    """Ordered, uniquely named collection of trainable tensors."""

    def __init__(self, schema_version: int = SCHEMA_VERSION):
        self.schema_version = schema_version
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, values: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        t = Tensor(np.array(values), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self):
        return list(self._params.keys())

    def tensors(self):
        return list(self._params.values())

    def zero_grad(self):
        for t in self._params.values():
            t.zero_grad()

    def copy(self) -> "ParameterStore":
        dup = ParameterStore(self.schema_version)
        for name, t in self._params.items():
            dup.add(name, t.values.copy())
        return dup


@dataclass
class AdamState:
    """Adam moments and hyperparameters, one slot pair per parameter."""

    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(store: ParameterStore, state: AdamState) -> None:
    """One bias-corrected Adam update; clears gradients afterwards.

    Raises if any parameter is missing its gradient, naming the offender —
    a missing gradient almost always means the loss graph silently dropped
    a branch.
    """
    for name, p in store.items():
        if p.grad is None:
            raise ValueError(f"parameter '{name}' has no gradient; run backward first")

    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p in store.items():
        g = p.grad
        if name not in state.m:
            state.m[name] = np.zeros_like(p.values)
            state.v[name] = np.zeros_like(p.values)
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        p.values -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    store.zero_grad()


def save_checkpoint(store: ParameterStore, path: str) -> None:
    """Serialize the store to the fixed binary format (float32 payload)."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", store.schema_version, len(store)))
        for name, tensor in store.items():
            encoded = name.encode("utf-8")
            arr = np.ascontiguousarray(tensor.values, dtype=np.float32)
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f4", copy=False).tobytes())


def load_checkpoint(path: str, dtype=np.float64) -> ParameterStore:
    """Read a checkpoint back into a store (values upcast to ``dtype``)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError("bad magic string; not a model checkpoint")
    off = len(MAGIC)
    version, count = struct.unpack_from("<II", blob, off)
    off += 8
    if version != SCHEMA_VERSION:
        raise CheckpointError(f"unsupported checkpoint schema version {version}")
    store = ParameterStore(schema_version=version)
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        (rank,) = struct.unpack_from("<I", blob, off)
        off += 4
        dims = struct.unpack_from(f"<{rank}I", blob, off)
        off += 4 * rank
        n = int(np.prod(dims)) if rank else 1
        vals = np.frombuffer(blob, dtype="<f4", count=n, offset=off).reshape(dims)
        off += 4 * n
        store.add(name, vals.astype(dtype))
    if off != len(blob):
        raise CheckpointError("trailing bytes after final parameter")
    return store
