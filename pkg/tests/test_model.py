import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cnsl.dataset import toy_cross_network
from cnsl.diffusion import DiffusionConfig, generate_dataset, substream
from cnsl.model import (CnslModel, InferConfig, TrainConfig, augment_seed_sets, average_latents,
                        _descend, binarize_seeds, decode, draw_monotone_pairs, encode, infer_seeds,
                        monotone_penalty, pool_weights, prediction_loss, surrogate_forward, train, train_loss)
from cnsl.graph import bridge_argmax
from cnsl.neural import Tensor, bce_loss
from cnsl.neural import tensor as T

from gradcheck import check


@pytest.fixture(scope="module")
def cross():
    return toy_cross_network(0, 12, 16)


@pytest.fixture(scope="module")
def samples(cross):
    cfg = DiffusionConfig("IC", ic_edge_prob=0.3, mc_samples=50)
    return generate_dataset(cross, 8, 0.2, cfg, cfg, rng_seed=0)


def small_model(cross, seed=0):
    return CnslModel(cross, k1=3, k2=2, hidden=8, surrogate_hidden=6, surrogate_hops=2, seed=seed)


def test_shapes(cross, samples):
    model = small_model(cross)
    (z_s, z_fs), kl_s, kl_fs = encode(model, samples[0].x_s, substream(0))
    assert z_s.shape == (1, 3) and z_fs.shape == (1, 2)
    assert float(kl_s.data) >= 0 and float(kl_fs.data) >= 0
    x_hat = decode(model, average_latents(model, [samples[0].x_s]))
    assert x_hat.shape == (12,) and np.all((x_hat > 0) & (x_hat < 1))
    y_s, x_t, y_t = surrogate_forward(model, x_hat)
    assert y_s.shape == (12,) and x_t.shape == (16,) and y_t.shape == (16,)
    assert np.allclose(x_t, cross.transfer(y_s))


def test_input_size_checked(cross):
    with pytest.raises(ValueError, match="source network has 12 nodes"):
        small_model(cross).posterior(np.zeros(5))


def test_train_loss_breakdown_and_capacity_hinge(cross, samples):
    model = small_model(cross)
    rng = substream(1)
    cfg = TrainConfig(capacity_s=0.0, capacity_fs=0.0)
    loss, parts = train_loss(model, samples[:2], draw_monotone_pairs(samples[:2], 2, rng), cfg, rng)
    assert set(parts) >= {"recon", "diff_source", "diff_target", "kl_s", "kl_fs", "capacity", "monotone", "total"}
    assert parts["capacity"] == pytest.approx(parts["kl_s"] + parts["kl_fs"])
    _, loose = train_loss(model, samples[:2], [], TrainConfig(capacity_s=1e6, capacity_fs=1e6), substream(1))
    assert loose["capacity"] == 0.0


def test_monotone_penalty_zero_iff_ordered():
    big = Tensor(np.array([0.5, 0.5]))
    assert float(monotone_penalty(big, [Tensor(np.array([0.1, 0.5]))]).data) == 0.0
    assert float(monotone_penalty(big, [Tensor(np.array([0.7, 0.5]))]).data) == pytest.approx(0.04)


def test_monotone_pairs_are_strict_subsets(samples):
    for x_big, subsets in draw_monotone_pairs(samples[:1], 4, substream(2)):
        for x in subsets:
            assert np.all(x <= x_big) and x.sum() < x_big.sum()


def test_augmented_sets_match_batch_sizes(samples):
    for x in augment_seed_sets(samples[:2], 5, substream(3)):
        assert x.sum() == samples[0].x_s.sum()


def test_training_reduces_loss_and_is_deterministic(cross, samples):
    cfg = TrainConfig(epochs=3, lr_vae=1e-3, rng_seed=4, augment_seed_sets=1)
    a, b = small_model(cross), small_model(cross)
    ra, rb = train(a, samples, cfg), train(b, samples, cfg)
    assert ra.epoch_loss[-1] < ra.epoch_loss[0]
    assert ra.epoch_loss == rb.epoch_loss
    assert all(np.array_equal(p.data, q.data) for p, q in zip(a.parameters(), b.parameters()))


def test_param_groups_cover_everything(cross):
    model = small_model(cross)
    groups = model.param_groups()
    ids = [id(p) for g in groups.values() for p in g]
    assert len(ids) == len(set(ids)) == len(model.parameters())


def test_checkpoint_roundtrip_and_mismatch(cross, tmp_path):
    model = small_model(cross, seed=3)
    model.save(tmp_path / "m.ckpt")
    back = CnslModel.load(tmp_path / "m.ckpt", cross)
    assert all(np.array_equal(p.data, q.data) for p, q in zip(model.parameters(), back.parameters()))
    with pytest.raises(ValueError, match="nodes"):
        CnslModel.load(tmp_path / "m.ckpt", toy_cross_network(0, 10, 16))
    with pytest.raises(ValueError, match="fingerprint"):
        CnslModel.load(tmp_path / "m.ckpt", toy_cross_network(1, 12, 16))


@pytest.mark.parametrize("seed_weight", [0.0, 1.0])
def test_prediction_loss_gradient_wrt_latent(cross, seed_weight):
    model = small_model(cross, seed=5)
    rng = np.random.default_rng(0)
    z_s = Tensor(rng.standard_normal(3), requires_grad=True)
    z_fs = Tensor(rng.standard_normal(2))
    target = rng.random(16)
    # the hardened decode is piecewise constant, so it is fixed at the base point
    hard = (model.decode_tensor(z_s, z_fs).data >= 0.5).astype(float)

    # bridge winners are piecewise constant as well; FD steps stay inside one piece
    def build():
        x_hat = model.decode_tensor(z_s, z_fs)
        y_s = model.surrogate_source(x_hat)
        winner = bridge_argmax(y_s.data, cross.bridges, 16)
        y_t = model.surrogate_target(T.gather_max(y_s, winner))
        return T.tsum(T.square(y_t - target)) + seed_weight * bce_loss(x_hat, hard) * 12.0

    assert check(build, [z_s]) < 1e-4
    loss, _, _ = prediction_loss(model, z_s, z_fs, target, seed_weight)
    assert float(loss.data) == pytest.approx(float(build().data))


def test_binarize_rules():
    p = np.array([0.2, 0.9, 0.9, 0.1, 0.6])
    assert binarize_seeds(p, "top-m", 2).tolist() == [0, 1, 1, 0, 0]
    assert binarize_seeds(p, "top-m", 1).tolist() == [0, 1, 0, 0, 0]
    assert binarize_seeds(p, "threshold", threshold=0.5).tolist() == [0, 1, 1, 0, 1]
    with pytest.raises(ValueError):
        binarize_seeds(p, "top-m")


def test_inference_trace_and_objectives(cross, samples):
    model = small_model(cross)
    seed_sets = [s.x_s for s in samples]
    x, p, trace = infer_seeds(model, samples[0].y_t, seed_sets, InferConfig())
    assert trace["eta"] == 2 and len(trace["iterations"]) == 2
    assert x.sum() == round(np.mean([s.sum() for s in seed_sets]))
    assert not trace["target_all_ones"]
    _, _, trace = infer_seeds(model, samples[0].y_t, seed_sets, InferConfig(objective="spread-max"))
    assert trace["target_all_ones"] and trace["target_sum"] == 16


def test_inference_only_moves_z_s(cross, samples):
    model = small_model(cross)
    before = [p.data.copy() for p in model.parameters()]
    infer_seeds(model, samples[0].y_t, [s.x_s for s in samples], InferConfig(eta=5, restarts=2))
    assert all(np.array_equal(a, p.data) for a, p in zip(before, model.parameters()))


def test_restarts_keep_the_best_final_loss(cross, samples):
    model = small_model(cross)
    _, _, trace = infer_seeds(model, samples[0].y_t, [s.x_s for s in samples],
                              InferConfig(eta=3, restarts=4, k=2))
    losses = [r["final_loss"] for r in trace["restarts"]]
    assert trace["chosen_restart"] == int(np.argmin(losses))


def test_batched_restarts_match_separate_descents(cross, samples):
    model = small_model(cross, seed=2)
    rng = np.random.default_rng(4)
    zs, zfs = rng.standard_normal((3, 3)), rng.standard_normal((3, 2))
    cfg = InferConfig(eta=4, alpha=0.3, seed_weight=0.5)
    z_batch, _, _ = _descend(model, zs, zfs, samples[2].y_t, cfg)
    for r in range(3):
        z_row, _, _ = _descend(model, zs[r:r + 1], zfs[r:r + 1], samples[2].y_t, cfg)
        assert np.allclose(z_batch.data[r], z_row.data[0], atol=1e-12)
    _, seed_rows, spread_rows = prediction_loss(model, Tensor(zs), Tensor(zfs), samples[2].y_t)
    for r in range(3):
        _, sd, spr = prediction_loss(model, Tensor(zs[r]), Tensor(zfs[r]), samples[2].y_t)
        assert seed_rows[r] == pytest.approx(sd) and spread_rows[r] == pytest.approx(spr)


def test_batched_prediction_loss_gradient(cross):
    model = small_model(cross, seed=6)
    rng = np.random.default_rng(1)
    z_s = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
    z_fs = Tensor(rng.standard_normal((2, 2)))
    y = rng.random(16)
    assert check(lambda: prediction_loss(model, z_s, z_fs, y, 1.0)[0], [z_s]) < 1e-4


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=1, max_size=12))
def test_pool_weights(losses):
    for pool in ("best", "weighted"):
        w = pool_weights(np.array(losses), pool)
        assert w.sum() == pytest.approx(1.0) and np.all(w >= 0)
        # the lowest loss always carries the largest weight
        assert w[int(np.argmin(losses))] == pytest.approx(w.max())
    assert pool_weights(np.array(losses), "best").max() == 1.0


def test_weighted_pool_in_trace(cross, samples):
    model = small_model(cross)
    seeds, probs, trace = infer_seeds(model, samples[0].y_t, [s.x_s for s in samples],
                                      InferConfig(eta=2, restarts=3, k=2, pool="weighted"))
    w = [r["weight"] for r in trace["restarts"]]
    assert sum(w) == pytest.approx(1.0) and trace["pool"] == "weighted"
    assert probs.shape == (12,) and np.all((probs > 0) & (probs < 1))


def test_single_restart_reproduces_first_start(cross, samples):
    model = small_model(cross)
    seeds = [s.x_s for s in samples]
    a = infer_seeds(model, samples[1].y_t, seeds, InferConfig(eta=3, k=3))
    b = infer_seeds(model, samples[1].y_t, seeds, InferConfig(eta=3, k=3))
    assert np.array_equal(a[1], b[1])


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(surrogate_input="nope")
    with pytest.raises(ValueError):
        InferConfig(objective="nope")
    with pytest.raises(ValueError):
        InferConfig(restarts=0)
    with pytest.raises(ValueError):
        InferConfig(pool="median")
    assert TrainConfig().epochs == 15 and TrainConfig().batch_size == 2
    assert InferConfig().eta == 2
