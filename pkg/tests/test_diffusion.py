import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from omnisync import depth_tools as dtool
from omnisync.diffusion import data as ddata
from omnisync.diffusion import schedule as dsched
from omnisync.diffusion import sampling as dsamp
from omnisync.diffusion import training as dtrain
from omnisync.diffusion.unet import ToyUNet, ToyUNetConfig
from omnisync.eval_metrics import seam_discontinuity


# --------------------------------------------------------------------- schedule

def test_schedule_matches_recurrence_oracle():
    sched = dsched.make_schedule(1000)
    want = oracles.linear_beta_alpha_bar(1000)
    assert np.abs(sched.alpha_bar - want).max() < 1e-12
    assert sched.alpha_bar[0] == pytest.approx(1 - 1e-4, abs=1e-15)
    assert np.all(np.diff(sched.alpha_bar) < 0)


def test_alpha_sigma_identity_and_endpoints():
    sched = dsched.make_schedule(1000)
    t = np.arange(0, 1001)
    a, s = sched.alpha_sigma(t)
    assert np.abs(a * a + s * s - 1.0).max() < 1e-12
    assert a[0] == 1.0 and s[0] == 0.0
    a_T, s_T = sched.alpha_sigma(1000)
    assert s_T > 0.99  # terminal state is essentially pure noise


def test_alpha_sigma_rejects_out_of_range():
    sched = dsched.make_schedule(10)
    with pytest.raises(ValueError):
        sched.alpha_sigma(-1)
    with pytest.raises(ValueError):
        sched.alpha_sigma(11)
    with pytest.raises(ValueError):
        dsched.make_schedule(1)


def test_v_algebra_inverts():
    rng = np.random.default_rng(0)
    sched = dsched.make_schedule(1000)
    x0 = rng.standard_normal((4, 6, 4, 5, 5))
    eps = rng.standard_normal(x0.shape)
    t = rng.integers(1, 1001, size=4)
    a, s = sched.alpha_sigma(t)
    z = dsched._bcast(a, x0) * x0 + dsched._bcast(s, x0) * eps
    v = dsched.v_target(x0, eps, t, sched)
    assert np.abs(dsched.reconstruct_x0(z, v, t, sched) - x0).max() < 1e-10
    assert np.abs(dsched.reconstruct_eps(z, v, t, sched) - eps).max() < 1e-10


@settings(deadline=None, max_examples=50)
@given(st.integers(1, 1000), st.floats(-3, 3), st.floats(-3, 3))
def test_v_algebra_pointwise(t, x0, eps):
    sched = dsched.make_schedule(1000)
    a, s = sched.alpha_sigma(t)
    z = a * x0 + s * eps
    v = oracles.v_from(x0, eps, a, s)
    assert abs(oracles.x0_from(z, v, a, s) - x0) < 1e-10
    assert abs(oracles.eps_from(z, v, a, s) - eps) < 1e-10


def test_masked_injection_keeps_condition_faces_bit_equal():
    rng = np.random.default_rng(1)
    sched = dsched.make_schedule(100)
    batch = ddata.make_batch(rng, 3, 8)
    eps_c = ddata.sample_block_noise(rng, batch.x0_c.shape)
    eps_d = ddata.sample_block_noise(rng, batch.x0_d.shape)
    t = np.array([10, 50, 100])
    z_c, z_d = dsched.masked_noise_inject(batch.x0_c, batch.x0_d, batch.mask,
                                          t, eps_c, eps_d, sched)
    cond = 0
    assert np.array_equal(z_c[:, cond], batch.x0_c[:, cond])
    assert np.array_equal(z_d[:, cond], batch.x0_d[:, cond])
    a, s = sched.alpha_sigma(t)
    want = dsched._bcast(a, z_c) * batch.x0_c + dsched._bcast(s, z_c) * eps_c
    assert np.abs(z_c[:, 1:] - want[:, 1:]).max() < 1e-14


def test_face_mask_validation():
    with pytest.raises(ValueError):
        dsched.check_face_mask(np.ones((2, 6, 4, 4)))
    bad = np.ones((1, 6, 1, 4, 4))
    bad[0, 2, 0, 1, 1] = 0.0
    with pytest.raises(ValueError):
        dsched.check_face_mask(bad)
    bad2 = np.full((1, 6, 1, 4, 4), 0.5)
    with pytest.raises(ValueError):
        dsched.check_face_mask(bad2)


# ------------------------------------------------------------------------- data

def test_monomial_count():
    assert ddata.n_monomials(0) == 1
    assert ddata.n_monomials(1) == 4
    assert ddata.n_monomials(2) == 10


def test_make_scene_ranges_and_conventions():
    rng = np.random.default_rng(2)
    rgb, depth = ddata.make_scene(rng, 16)
    assert rgb.shape == (6, 16, 16, 3)
    assert rgb.min() >= 0.0 and rgb.max() <= 1.0
    assert depth.convention == dtool.ZDEPTH
    assert np.all(depth.values > 0)


def test_make_scene_is_seam_continuous():
    rng = np.random.default_rng(3)
    rgb, depth = ddata.make_scene(rng, 32)
    rep = seam_discontinuity(rgb)
    assert rep.ratio < 3.0
    e = dtool.z_to_euclidean(depth)
    rep_d = seam_discontinuity(e.values)
    assert rep_d.ratio < 3.0


def test_rgb_coding_round_trip():
    rng = np.random.default_rng(4)
    rgb = rng.random((6, 8, 8, 3))
    coded = ddata.encode_rgb(rgb)
    assert np.abs(coded).max() <= ddata.RGB_LATENT_GAIN + 1e-12
    back = ddata.decode_rgb(coded)
    assert np.abs(back - rgb).max() < 1e-12
    # decoding clips out-of-range latents into [0, 1]
    assert ddata.decode_rgb(np.array([10.0])).max() <= 1.0
    assert ddata.decode_rgb(np.array([-10.0])).min() >= 0.0


def test_image_block_packing():
    rng = np.random.default_rng(5)
    rgb = rng.random((6, 4, 4, 3))
    block = ddata.pack_image_block(rgb)
    assert block.shape == (6, 4, 4, 4)
    assert np.array_equal(block[:, 3], np.zeros((6, 4, 4)))
    assert np.abs(block[:, :3] - np.moveaxis(ddata.encode_rgb(rgb), -1, 1)).max() == 0


def test_depth_block_packing_round_trip():
    rng = np.random.default_rng(6)
    coded = rng.standard_normal((6, 4, 4))
    block = ddata.pack_depth_block(coded)
    assert block.shape == (6, 4, 4, 4)
    assert np.array_equal(block[:, 0], coded)
    assert np.array_equal(block[:, 1], coded)
    assert np.array_equal(block[:, 2], coded)
    assert np.array_equal(block[:, 3], np.zeros_like(coded))
    back = ddata.unpack_depth_block(block)
    assert np.abs(back - coded).max() < 1e-15


def test_block_noise_leaves_pad_channel_clean():
    rng = np.random.default_rng(7)
    eps = ddata.sample_block_noise(rng, (2, 6, 4, 8, 8))
    assert np.array_equal(eps[:, :, 3], np.zeros((2, 6, 8, 8)))
    live = eps[:, :, :3]
    assert abs(live.mean()) < 0.05
    assert abs(live.std() - 1) < 0.05


def test_encode_scenes_mask_and_norms():
    rng = np.random.default_rng(8)
    scenes = [ddata.make_scene(rng, 8) for _ in range(3)]
    batch = ddata.encode_scenes(scenes, [0.6, 0.3, 0.9], condition_face=2)
    assert batch.x0_c.shape == (3, 6, 4, 8, 8)
    assert batch.mask.shape == (3, 6, 1, 8, 8)
    assert np.all(batch.mask[:, 2] == 0)
    assert np.all(np.delete(batch.mask, 2, axis=1) == 1)
    # depth coding honors each item's own s
    for i, s in enumerate([0.6, 0.3, 0.9]):
        cond = batch.x0_d[i, 2, 0]
        assert abs(cond.min() + s) < 1e-12
        assert abs(cond.max() - s) < 1e-12


def test_assemble_input_layout():
    rng = np.random.default_rng(9)
    batch = ddata.make_batch(rng, 2, 8)
    x = ddata.assemble_input(batch.x0_c, batch.x0_d, batch.mask)
    assert x.shape == (2, 6, 12, 8, 8)
    assert np.array_equal(x[:, :, :4], batch.x0_c)
    assert np.array_equal(x[:, :, 4:8], batch.x0_d)
    from omnisync.omni_encoding import xyz_encoding
    assert np.array_equal(x[0, :, 8:11], xyz_encoding(8).data)
    assert np.array_equal(x[:, :, 11:12], batch.mask)
    v = np.concatenate([batch.x0_c, batch.x0_d], axis=2)
    v_c, v_d = ddata.split_output(v)
    assert np.array_equal(v_c, batch.x0_c)
    assert np.array_equal(v_d, batch.x0_d)


# ------------------------------------------------------------------------ model

def tiny_unet(sync=True, dtype="float64"):
    cfg = ToyUNetConfig(base_channels=8, heads=2, sync_sa=sync,
                        sync_conv=sync, sync_gn=sync, dtype=dtype)
    return ToyUNet(cfg, seed=0)


def test_unet_forward_shape_and_determinism():
    model = tiny_unet()
    rng = np.random.default_rng(10)
    batch = ddata.make_batch(rng, 2, 8)
    x = ddata.assemble_input(batch.x0_c, batch.x0_d, batch.mask)
    t = np.array([5, 500])
    out1, cache = model.forward(x, t)
    out2, _ = model.forward(x, t)
    assert out1.shape == (2, 6, 8, 8, 8)
    assert np.array_equal(out1, out2)
    assert np.all(np.isfinite(out1))


def test_unet_same_seed_same_params():
    a = tiny_unet()
    b = tiny_unet()
    assert set(a.params) == set(b.params)
    for k in a.params:
        assert np.array_equal(a.params[k], b.params[k])
    c = ToyUNet(ToyUNetConfig(base_channels=8, heads=2), seed=1)
    assert any(not np.array_equal(a.params[k], c.params[k]) for k in a.params)


def test_unet_sync_flags_change_output():
    rng = np.random.default_rng(11)
    batch = ddata.make_batch(rng, 1, 8)
    x = ddata.assemble_input(batch.x0_c, batch.x0_d, batch.mask)
    t = np.array([100])
    y_sync, _ = tiny_unet(True).forward(x, t)
    y_nosync, _ = tiny_unet(False).forward(x, t)
    assert np.abs(y_sync - y_nosync).max() > 1e-6


# --------------------------------------------------------------------- sampling

def test_ddim_timesteps_descend_to_stride():
    ts = dsamp.ddim_timesteps(1000, 50)
    assert len(ts) == 50
    assert ts[0] == 1000
    assert ts[-1] == 20
    assert all(a - b == 20 for a, b in zip(ts, ts[1:]))
    with pytest.raises(ValueError):
        dsamp.ddim_timesteps(100, 0)
    with pytest.raises(ValueError):
        dsamp.ddim_timesteps(100, 101)


def test_ddim_sample_keeps_condition_faces_bit_equal():
    rng = np.random.default_rng(12)
    model = tiny_unet()
    sched = dsched.make_schedule(100)
    batch = ddata.make_batch(rng, 2, 8, s=0.6)
    out_c, out_d = dsamp.ddim_sample(model, batch.x0_c, batch.x0_d, batch.mask,
                                     sched, steps=5,
                                     rng=np.random.default_rng(99))
    assert np.array_equal(out_c[:, 0], batch.x0_c[:, 0].astype(out_c.dtype))
    assert np.array_equal(out_d[:, 0], batch.x0_d[:, 0].astype(out_d.dtype))
    assert np.all(np.isfinite(out_c)) and np.all(np.isfinite(out_d))


def test_ddim_sample_is_deterministic_given_rng_seed():
    rng = np.random.default_rng(13)
    model = tiny_unet()
    sched = dsched.make_schedule(100)
    batch = ddata.make_batch(rng, 1, 8, s=0.6)
    a = dsamp.ddim_sample(model, batch.x0_c, batch.x0_d, batch.mask, sched,
                          steps=4, rng=np.random.default_rng(7))
    b = dsamp.ddim_sample(model, batch.x0_c, batch.x0_d, batch.mask, sched,
                          steps=4, rng=np.random.default_rng(7))
    c = dsamp.ddim_sample(model, batch.x0_c, batch.x0_d, batch.mask, sched,
                          steps=4, rng=np.random.default_rng(8))
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    assert not np.array_equal(a[0], c[0])


def test_decode_sample_recovers_condition_face_content():
    rng = np.random.default_rng(14)
    model = tiny_unet()
    sched = dsched.make_schedule(100)
    scenes = [ddata.make_scene(rng, 8)]
    batch = ddata.encode_scenes(scenes, [0.6])
    out_c, out_d = dsamp.ddim_sample(model, batch.x0_c, batch.x0_d, batch.mask,
                                     sched, steps=5)
    rgb, depth = dsamp.decode_sample(out_c, out_d, batch.norms)
    assert rgb.shape == (1, 6, 8, 8, 3)
    assert depth.shape == (1, 6, 8, 8)
    assert np.abs(rgb[0, 0] - scenes[0][0][0]).max() < 1e-6
    assert np.abs(depth[0, 0] - scenes[0][1].values[0]).max() < 1e-6


# --------------------------------------------------------------------- training

def test_masked_v_loss_counts_only_masked_faces():
    rng = np.random.default_rng(15)
    shape = (2, 6, 4, 4, 4)
    v_hat_c = rng.standard_normal(shape)
    v_c = rng.standard_normal(shape)
    v_hat_d = rng.standard_normal(shape)
    v_d = rng.standard_normal(shape)
    mask = np.ones((2, 6, 1, 4, 4))
    mask[:, 0] = 0.0
    loss, gc, gd = dtrain.masked_v_loss(v_hat_c, v_hat_d, v_c, v_d, mask)
    dc = (v_hat_c - v_c) * mask
    dd = (v_hat_d - v_d) * mask
    denom = mask.sum() * 4
    want = (np.sum(dc * dc) + np.sum(dd * dd)) / denom
    assert loss == pytest.approx(want, rel=1e-12)
    assert np.all(gc[:, 0] == 0)
    assert np.abs(gc - 2 * dc / denom).max() < 1e-15
    # condition-only mask is an error
    with pytest.raises(ValueError):
        dtrain.masked_v_loss(v_hat_c, v_hat_d, v_c, v_d, np.zeros_like(mask))


def test_loss_gradient_direction_reduces_loss():
    rng = np.random.default_rng(16)
    cfg = dtrain.TrainConfig(face_size=8, batch_size=2, n_steps=1, lr=0.05,
                             base_channels=8, n_scenes=2, dtype="float64")
    model = ToyUNet(cfg.unet_config(), seed=0)
    sched = dsched.make_schedule(cfg.T)
    batch = ddata.make_batch(rng, 2, 8)
    step_rng = np.random.default_rng(17)
    loss0, grads = dtrain.loss_and_grads(model, batch, sched,
                                         np.random.default_rng(5))
    dtrain.sgd_step(model, grads, 0.05)
    loss1, _ = dtrain.loss_and_grads(model, batch, sched,
                                     np.random.default_rng(5))
    assert loss1 < loss0


def test_train_toy_records_history_and_is_deterministic():
    cfg = dtrain.TrainConfig(face_size=8, batch_size=2, n_steps=4, lr=0.05,
                             base_channels=8, n_scenes=2, seed=3,
                             dtype="float32")
    m1, h1 = dtrain.train_toy(cfg)
    m2, h2 = dtrain.train_toy(cfg)
    assert len(h1.losses) == 4
    assert h1.losses == h2.losses
    assert not h1.stopped_early
    for k in m1.params:
        assert np.array_equal(m1.params[k], m2.params[k])


def test_train_toy_honors_time_budget():
    cfg = dtrain.TrainConfig(face_size=8, batch_size=1, n_steps=10_000,
                             lr=0.01, base_channels=8, n_scenes=2,
                             time_budget_s=0.5, dtype="float32")
    _, hist = dtrain.train_toy(cfg)
    assert hist.stopped_early
    assert len(hist.losses) < 10_000


def test_eval_state_is_frozen_and_reused():
    ev1 = dtrain.make_eval_state(8, 4, 100, seed=42)
    ev2 = dtrain.make_eval_state(8, 4, 100, seed=42)
    assert np.array_equal(ev1.t, ev2.t)
    assert np.array_equal(ev1.eps_c, ev2.eps_c)
    assert np.array_equal(ev1.batch.x0_c, ev2.batch.x0_c)
    sched = dsched.make_schedule(100)
    model = tiny_unet()
    a = dtrain.eval_loss(model, ev1, sched)
    b = dtrain.eval_loss(model, ev2, sched)
    assert a == b
    cfg = dtrain.TrainConfig(face_size=8, batch_size=2, n_steps=2, lr=0.05,
                             base_channels=8, n_scenes=2, T=100,
                             dtype="float32")
    _, hist = dtrain.train_toy(cfg, eval_state=ev1)
    assert hist.eval_before is not None and hist.eval_after is not None


def test_training_timesteps_cover_the_schedule_uniformly():
    """The per-step draw is stratified; across many steps each timestep slice
    must be hit at its uniform rate and the extremes must be reachable."""
    sched = dsched.make_schedule(100)
    model = tiny_unet(dtype="float32")
    rng = np.random.default_rng(18)
    b = 4
    seen = []
    for _ in range(300):
        u = (rng.permutation(b) + rng.random(b)) / b
        t = 1 + np.minimum((u * sched.T).astype(np.int64), sched.T - 1)
        seen.extend(t.tolist())
    seen = np.asarray(seen)
    assert seen.min() >= 1 and seen.max() <= 100
    assert seen.min() <= 3 and seen.max() >= 98
    hist, _ = np.histogram(seen, bins=4, range=(0.5, 100.5))
    assert np.all(hist == len(seen) // 4)
