import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hycass import checkpoint as C
from hycass.data import SyntheticSpec, synth_dataset
from hycass.errors import (
    DimensionOverflowError,
    HashMismatchError,
    MalformedMagicError,
    NonFiniteError,
    ShapeError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from hycass.model import HycassConfig, forward, init_params
from hycass.training import (
    AdamState,
    TrainConfig,
    Trainer,
    adam_step,
    clip_by_global_norm,
    mse_loss,
    train,
)

CFG = HycassConfig(bands=4, latent_channels=2, stages=1, features=8, window=4, heads=2)
FAST = TrainConfig(epochs=2, learning_rate=1e-3, batch_size=2, patch_size=8, steps_per_epoch=3)


@pytest.fixture(scope="module")
def cubes():
    return synth_dataset(SyntheticSpec(count=3, height=16, width=16, bands=4, seed=3))


def test_mse_examples():
    x = np.zeros((2, 2))
    loss, g = mse_loss(x, np.full((2, 2), 0.5))
    assert loss == 0.25
    np.testing.assert_array_equal(g, np.full((2, 2), 0.25))
    with pytest.raises(ShapeError):
        mse_loss(x, np.zeros(4))


def test_mse_gradient_fd(rng):
    x, y = rng.random(12), rng.random(12)
    _, g = mse_loss(x, y)
    h = 1e-6
    for i in range(12):
        e = np.zeros(12)
        e[i] = h
        fd = (mse_loss(x, y + e)[0] - mse_loss(x, y - e)[0]) / (2 * h)
        assert abs(fd - g[i]) < 1e-8


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=20), st.integers(0, 100))
def test_mse_symmetry(vals, seed):
    x = np.array(vals)
    y = x + np.random.default_rng(seed).standard_normal(x.size)
    (a, ga), (b, gb) = mse_loss(x, y), mse_loss(y, x)
    assert a == b and a >= 0
    np.testing.assert_allclose(ga, -gb)


def test_adam_two_step_trace():
    cfg = TrainConfig(learning_rate=0.1)
    p = {"w": np.array([1.0])}
    st_ = AdamState.zeros_like(p)
    p, st_ = adam_step(p, {"w": np.array([0.5])}, st_, cfg)
    assert abs(p["w"][0] - 0.90000000199999996) < 1e-12
    p, st_ = adam_step(p, {"w": np.array([-0.2])}, st_, cfg)
    assert abs(p["w"][0] - 0.86543941811651059) < 1e-12
    assert st_.t == 2


def test_adam_does_not_mutate_inputs():
    p = {"w": np.ones(3)}
    s = AdamState.zeros_like(p)
    adam_step(p, {"w": np.ones(3)}, s, TrainConfig())
    assert np.all(p["w"] == 1) and np.all(s.m["w"] == 0) and s.t == 0


def test_adam_zero_grad_and_constant_grad():
    cfg = TrainConfig(learning_rate=0.01)
    p = {"w": np.array([2.0, -1.0])}
    s = AdamState.zeros_like(p)
    q, _ = adam_step(p, {"w": np.zeros(2)}, s, cfg)
    np.testing.assert_array_equal(q["w"], p["w"])
    g = {"w": np.array([3.0, -7.0])}
    for _ in range(50):
        prev = p["w"].copy()
        p, s = adam_step(p, g, s, cfg)
    # bias correction makes every step exactly lr * sign(g), up to eps
    np.testing.assert_allclose(prev - p["w"], [0.01, -0.01], rtol=1e-8)


def test_adam_rejects_non_finite():
    p = {"w": np.ones(2)}
    with pytest.raises(NonFiniteError):
        adam_step(p, {"w": np.array([1.0, np.nan])}, AdamState.zeros_like(p), TrainConfig())


def test_clip_by_global_norm():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    c = clip_by_global_norm(g, 1.0)
    assert math.isclose(c["a"][0], 0.6) and math.isclose(c["b"][0], 0.8)
    assert clip_by_global_norm(g, 10.0) is g


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1)
    with pytest.raises(ValueError):
        TrainConfig(dtype="int8")
    assert TrainConfig.from_dict(FAST.to_dict()) == FAST


def test_zero_lr_keeps_weights(cubes):
    p0 = init_params(CFG, 0, np.float32)
    best, hist = train(CFG, FAST.__class__(**{**FAST.to_dict(), "learning_rate": 0.0}), cubes, params=p0)
    assert best.content_hash == p0.content_hash and len(hist) == 2


def test_same_seed_same_history(cubes):
    a = Trainer(CFG, FAST, cubes)
    b = Trainer(CFG, FAST, cubes)
    assert a.fit() == b.fit()
    assert a.params.content_hash == b.params.content_hash
    c = Trainer(CFG, TrainConfig(**{**FAST.to_dict(), "seed": 1}), cubes)
    c.fit()
    assert c.params.content_hash != a.params.content_hash


def test_resume_is_bit_exact(cubes, tmp_path):
    cfg = TrainConfig(**{**FAST.to_dict(), "epochs": 5})
    full = Trainer(CFG, cfg, cubes)
    full.fit()

    part = Trainer(CFG, cfg, cubes)
    part.fit(tmp_path / "ck.hyw", epochs=2)
    resumed = Trainer.from_checkpoint(C.load_checkpoint(tmp_path / "ck.hyw"), cubes)
    assert resumed.epoch == 2
    resumed.fit()
    assert resumed.params.content_hash == full.params.content_hash
    assert resumed.best.content_hash == full.best.content_hash
    assert resumed.history == full.history


def test_resume_rejects_changed_config(cubes, tmp_path):
    tr = Trainer(CFG, FAST, cubes)
    tr.fit(tmp_path / "ck.hyw", epochs=1)
    ck = C.load_checkpoint(tmp_path / "ck.hyw")
    with pytest.raises(ValueError):
        Trainer.from_checkpoint(ck, cubes, train_cfg=TrainConfig(**{**FAST.to_dict(), "learning_rate": 1.0}))
    Trainer.from_checkpoint(ck, cubes, train_cfg=TrainConfig(**{**FAST.to_dict(), "epochs": 9}))


def test_history_csv(cubes, tmp_path):
    tr = Trainer(CFG, FAST, cubes)
    tr.fit()
    tr.history.write_csv(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss,val_psnr,seconds" and len(lines) == 3


def test_params_roundtrip_and_corruption(tmp_path):
    p = init_params(CFG, 4)
    C.save_params(p, tmp_path / "w.hyw")
    q = C.load_params(tmp_path / "w.hyw")
    assert q.content_hash == p.content_hash and q.config == p.config
    buf = bytearray(C.params_to_bytes(p))
    buf[len(buf) // 2] ^= 0x01
    with pytest.raises(HashMismatchError):
        C.params_from_bytes(bytes(buf))
    good = C.params_to_bytes(p)
    with pytest.raises(MalformedMagicError):
        C.params_from_bytes(b"NOPE" + good[4:])
    with pytest.raises(VersionMismatchError):
        C.params_from_bytes(good[:4] + (2).to_bytes(2, "little") + good[6:])
    with pytest.raises(TruncatedPayloadError):
        C.checkpoint_from_bytes(good + b"\0\0")


def test_float64_params_roundtrip():
    p = init_params(CFG, 4, np.float64)
    q = C.params_from_bytes(C.params_to_bytes(p))
    assert q.content_hash == p.content_hash
    assert q.tensors["cr_encoder.weight"].dtype == np.float64


def test_checkpoint_holds_optimizer_and_best(cubes):
    tr = Trainer(CFG, FAST, cubes)
    tr.fit(epochs=1)
    ck = C.checkpoint_from_bytes(C.checkpoint_to_bytes(tr.to_checkpoint()))
    assert ck.has_optimizer and ck.best.content_hash == tr.best.content_hash
    assert ck.meta["t"] == 3
    with pytest.raises(DimensionOverflowError):
        C.checkpoint_from_bytes(C.checkpoint_to_bytes(tr.to_checkpoint()) + b"\0")
    # weights-only readers skip the optimizer section
    assert C.params_from_bytes(C.checkpoint_to_bytes(tr.to_checkpoint())).content_hash == tr.params.content_hash


@settings(max_examples=25)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2), st.sampled_from([4, 8]),
       st.integers(0, 10_000))
def test_loss_finite_random_configs(bands, gamma, stages, features, seed):
    cfg = HycassConfig(bands=bands, latent_channels=gamma, stages=stages, features=features, window=2, heads=2)
    rng = np.random.default_rng(seed)
    x = rng.random((1, 8, 8, bands))
    loss, _ = mse_loss(x, forward(init_params(cfg, seed), x).reconstruction)
    assert math.isfinite(loss) and loss < 1


@pytest.mark.slow
def test_overfit_loss_strictly_decreasing():
    cube = synth_dataset(SyntheticSpec(height=32, width=32, bands=16, seed=0))
    cfg = HycassConfig(bands=16, latent_channels=4, stages=1, features=16, window=8, heads=2)
    good = 0
    for seed in range(10):
        tc = TrainConfig(epochs=20, learning_rate=1e-3, batch_size=1, patch_size=32, seed=seed, steps_per_epoch=5)
        _, hist = train(cfg, tc, cube)
        good += bool(np.all(np.diff([r.train_loss for r in hist]) < 0))
    assert good >= 9
