"""Collision predictor: score contracts, recurrent gradient check, training."""

import numpy as np
import pytest

from depthnav.cpn import CollisionPredictor, CpnConfig, binary_auc, train_cpn
from depthnav.data import LatentCollisionSet
from depthnav.errors import ShapeError
from depthnav.nn import lrelu_fingerprint, max_param_error

TINY = CpnConfig(variant="modular", latent_dim=6, horizon=4, hidden=8,
                 perception_embed=8, state_embed=4, action_embed=4)


def _latent_ds(n=160, seed=0, J=6, T=4):
    """Separable toy data: collision iff mu[0] + forward speed is large."""
    rng = np.random.default_rng(seed)
    mu = rng.normal(size=(n, J)).astype(np.float32)
    states = rng.normal(size=(n, 6)).astype(np.float32)
    actions = rng.normal(size=(n, T, 4)).astype(np.float32)
    danger = mu[:, 0] + actions[:, :, 0].mean(axis=1)
    labels = np.zeros((n, T), np.uint8)
    for i in range(n):
        if danger[i] > 0.3:
            onset = int(np.clip(2.0 - danger[i], 0, T - 1))
            labels[i, onset:] = 1
    return LatentCollisionSet(mu, states, actions, labels)


def test_untrained_scores_finite_in_unit_interval():
    model = CollisionPredictor(TINY, seed=0)
    rng = np.random.default_rng(1)
    scores = model.predict(rng.normal(size=6), rng.normal(size=6), rng.normal(size=(4, 4)))
    assert scores.shape == (4,)
    assert np.all(scores >= 0) and np.all(scores <= 1)


def test_scores_invariant_to_batch_order():
    model = CollisionPredictor(TINY, seed=2)
    rng = np.random.default_rng(3)
    mu = rng.normal(size=6)
    states = rng.normal(size=(3, 6)).astype(np.float32)
    actions = rng.normal(size=(7, 4, 4)).astype(np.float32)
    base = model.score_library(mu, states, actions)
    perm = rng.permutation(7)
    shuffled = model.score_library(mu, states, actions[perm])
    assert np.allclose(base[:, perm], shuffled, atol=1e-6)


def test_batched_library_equals_per_sequence_predictions():
    model = CollisionPredictor(TINY, seed=4)
    rng = np.random.default_rng(5)
    mu = rng.normal(size=6)
    state = rng.normal(size=6)
    actions = rng.normal(size=(5, 4, 4)).astype(np.float32)
    batch = model.score_library(mu, state[None], actions)
    for m in range(5):
        single = model.predict(mu, state, actions[m])
        assert np.allclose(batch[0, m], single, atol=1e-6)


def test_dimension_mismatch_rejected():
    model = CollisionPredictor(TINY, seed=0)
    with pytest.raises(ShapeError):
        model.predict(np.zeros(5), np.zeros(6), np.zeros((4, 4)))  # wrong J
    with pytest.raises(ShapeError):
        model.score_library(np.zeros(6), np.zeros((2, 6)), np.zeros((3, 4, 5)))


def test_gradients_through_recurrent_unrolling():
    cfg = TINY
    model = CollisionPredictor(cfg, seed=6, dtype=np.float64)
    rng = np.random.default_rng(7)
    mu = rng.normal(size=(3, cfg.latent_dim))
    states = rng.normal(size=(3, 6))
    actions = rng.normal(size=(3, cfg.horizon, 4))
    labels = (rng.random((3, cfg.horizon)) > 0.6).astype(np.uint8)

    def loss_and_grads():
        model.zero_grad()
        loss = model.loss_and_grads(mu, states, actions, labels, pos_weight=2.0)
        return loss, {k: v.copy() for k, v in model.grads().items()}

    err = max_param_error(loss_and_grads, model.params(), max_coords=15,
                          rng=np.random.default_rng(1),
                          fingerprint_fn=lambda: lrelu_fingerprint(model._layers()))
    assert err < 1e-4, f"max relative error {err}"


def test_end_to_end_variant_gradients_and_shapes():
    cfg = CpnConfig(variant="end-to-end", horizon=3, hidden=8, perception_embed=8,
                    state_embed=4, action_embed=4, image_hw=(12, 16), e2e_channels=(2, 3))
    model = CollisionPredictor(cfg, seed=8, dtype=np.float64)
    rng = np.random.default_rng(9)
    frames = rng.random((2, 12, 16))
    states = rng.normal(size=(2, 6))
    actions = rng.normal(size=(2, 3, 4))
    labels = (rng.random((2, 3)) > 0.5).astype(np.uint8)

    def loss_and_grads():
        model.zero_grad()
        loss = model.loss_and_grads(frames, states, actions, labels)
        return loss, {k: v.copy() for k, v in model.grads().items()}

    err = max_param_error(loss_and_grads, model.params(), max_coords=10,
                          rng=np.random.default_rng(2),
                          fingerprint_fn=lambda: lrelu_fingerprint(model._layers()))
    assert err < 1e-4, f"max relative error {err}"


def test_training_learns_separable_toy_problem():
    ds = _latent_ds(400)
    model, history = train_cpn(ds, TINY, seed=1, epochs=30, lr=3e-3, batch_size=64)
    assert history[-1].val_auc > 0.85
    assert history[-1].val_acc > 0.8
    assert history[-1].val_bce < history[0].val_bce


def test_same_seed_bit_identical_checkpoint(tmp_path):
    ds = _latent_ds(120)
    for run in ("a", "b"):
        train_cpn(ds, TINY, seed=5, epochs=2, batch_size=32, out_dir=tmp_path / run)
    assert (tmp_path / "a" / "cpn_modular.ckpt").read_bytes() == \
        (tmp_path / "b" / "cpn_modular.ckpt").read_bytes()


def test_checkpoint_round_trip_preserves_predictions(tmp_path):
    ds = _latent_ds(80)
    model, _ = train_cpn(ds, TINY, seed=3, epochs=2, batch_size=32)
    model.save(tmp_path / "m.ckpt")
    loaded = CollisionPredictor.load(tmp_path / "m.ckpt")
    rng = np.random.default_rng(0)
    mu, state = rng.normal(size=6), rng.normal(size=6)
    actions = rng.normal(size=(4, 4))
    assert np.array_equal(model.predict(mu, state, actions),
                          loaded.predict(mu, state, actions))


def test_binary_auc_reference_values():
    assert binary_auc(np.array([0.9, 0.8, 0.2, 0.1]), np.array([1, 1, 0, 0])) == 1.0
    assert binary_auc(np.array([0.1, 0.2, 0.8, 0.9]), np.array([1, 1, 0, 0])) == 0.0
    assert binary_auc(np.array([0.5, 0.5, 0.5, 0.5]), np.array([1, 1, 0, 0])) == 0.5
    assert np.isnan(binary_auc(np.array([0.5]), np.array([1])))
