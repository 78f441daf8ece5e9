import numpy as np
import pytest

import mimojscc.autodiff as ad
from mimojscc.optim import (
    AdamState,
    CheckpointError,
    ParameterStore,
    adam_step,
    load_checkpoint,
    save_checkpoint,
)


def reference_adam(w0, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    """Textbook update rule, run as an independent trajectory oracle."""
    w, m, v = w0, 0.0, 0.0
    path = []
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w = w - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        path.append(w)
    return path


def test_store_rejects_duplicates_and_orders_deterministically():
    store = ParameterStore()
    store.add("b", np.zeros(2))
    store.add("a", np.ones(3))
    assert store.names() == ["b", "a"]
    with pytest.raises(ValueError):
        store.add("a", np.zeros(1))
    assert "a" in store and len(store) == 2


def test_adam_zero_gradient_keeps_parameters():
    store = ParameterStore()
    p = store.add("w", np.array([1.0, -2.0]))
    p.grad = np.zeros(2)
    adam_step(store, AdamState(lr=0.1))
    assert np.array_equal(p.values, [1.0, -2.0])
    assert p.grad is None  # cleared afterwards


def test_adam_first_step_magnitude():
    store = ParameterStore()
    p = store.add("w", np.asarray(0.0))
    p.grad = np.asarray(0.37)
    adam_step(store, AdamState(lr=1e-3))
    assert p.values == pytest.approx(-1e-3, rel=1e-6)


def test_adam_missing_gradient_names_parameter():
    store = ParameterStore()
    store.add("w1", np.zeros(1))
    p2 = store.add("w2", np.zeros(1))
    p2.grad = np.zeros(1)
    with pytest.raises(ValueError, match="w1"):
        adam_step(store, AdamState())


def test_adam_lr_zero_is_identity_on_parameters():
    store = ParameterStore()
    p = store.add("w", np.array([0.5]))
    state = AdamState(lr=0.0)
    for _ in range(5):
        p.grad = np.array([1.7])
        adam_step(store, state)
    assert np.array_equal(p.values, [0.5])


def test_adam_quadratic_bowl_matches_reference_oracle():
    store = ParameterStore()
    p = store.add("w", np.asarray(1.0))
    state = AdamState(lr=0.05)
    mine = []
    grads = []
    for _ in range(500):
        g = 2.0 * float(p.values)  # d/dw of w^2
        grads.append(g)
        p.grad = np.asarray(g)
        adam_step(store, state)
        mine.append(float(p.values))
    assert abs(mine[-1]) < 1e-2
    oracle = reference_adam(1.0, grads, lr=0.05)
    assert np.allclose(mine, oracle, atol=1e-12)


def test_adam_drives_graph_loss_down():
    store = ParameterStore()
    w = store.add("w", np.array([3.0]))
    state = AdamState(lr=0.1)
    losses = []
    for _ in range(200):
        loss = ad.sum_all(ad.mul(w, w))
        loss.backward()
        losses.append(float(loss.values))
        adam_step(store, state)
    assert losses[-1] < 1e-2 * losses[0]


# ---------------------------------------------------------------------------
# checkpoint wire format


def build_store():
    store = ParameterStore()
    rng = np.random.Generator(np.random.Philox(key=np.array([5, 6], dtype=np.uint64)))
    store.add("enc.w0", rng.random((4, 3)).astype(np.float32))
    store.add("dec.bias", rng.random(7).astype(np.float32))
    store.add("res.alpha", np.float32(0.25))
    return store


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    store = build_store()
    path = str(tmp_path / "m.ckpt")
    save_checkpoint(store, path)
    back = load_checkpoint(path, dtype=np.float32)
    assert back.names() == store.names()
    for name, t in store.items():
        assert np.array_equal(back[name].values, np.asarray(t.values, dtype=np.float32))
        assert back[name].values.shape == t.values.shape


def test_checkpoint_save_load_save_is_byte_stable(tmp_path):
    store = ParameterStore()
    rng = np.random.Generator(np.random.Philox(key=np.array([9, 9], dtype=np.uint64)))
    store.add("w", rng.random((5, 5)))  # float64 values round through float32
    p1 = str(tmp_path / "a.ckpt")
    p2 = str(tmp_path / "b.ckpt")
    save_checkpoint(store, p1)
    save_checkpoint(load_checkpoint(p1), p2)
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_checkpoint_header_layout(tmp_path):
    store = build_store()
    path = str(tmp_path / "m.ckpt")
    save_checkpoint(store, path)
    blob = open(path, "rb").read()
    assert blob[:7] == b"DJSCCM1"
    assert int.from_bytes(blob[7:11], "little") == 1  # schema version
    assert int.from_bytes(blob[11:15], "little") == 3  # parameter count
    first_name_len = int.from_bytes(blob[15:19], "little")
    assert blob[19 : 19 + first_name_len] == b"enc.w0"


def test_checkpoint_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
    with pytest.raises(CheckpointError):
        load_checkpoint(str(bad))

    store = build_store()
    good = tmp_path / "good.ckpt"
    save_checkpoint(store, str(good))
    blob = bytearray(good.read_bytes())
    blob[7] = 99  # clobber schema version
    bad2 = tmp_path / "bad2.ckpt"
    bad2.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError):
        load_checkpoint(str(bad2))

    trailing = tmp_path / "trailing.ckpt"
    trailing.write_bytes(good.read_bytes() + b"\x00")
    with pytest.raises(CheckpointError):
        load_checkpoint(str(trailing))
