"""Dataset construction, labeling, augmentation, containers, PGM import."""

import numpy as np
import pytest

from depthnav.camera import DepthFrame
from depthnav.data import (
    CollisionDatapoint,
    CollisionSet,
    FrameSet,
    LatentCollisionSet,
    dataset_info,
    encode_dataset,
    export_frames,
    flip_augment,
    flip_augment_set,
    import_depth_images,
    label_episode,
    load_dataset,
    save_dataset,
    split,
    with_flip_augmentation,
)
from depthnav.errors import DatasetError, ShapeError
from depthnav.world import ACTION_DIM, CollisionEpisode


def _episode(length, collided_at=None, T=8, seed=0):
    rng = np.random.default_rng(seed)
    frames = [DepthFrame(rng.random((6, 8), dtype=np.float32), np.ones((6, 8), np.uint8),
                         np.zeros((6, 8), np.uint16)) for _ in range(length)]
    collided = np.zeros(length, np.uint8)
    ended = collided_at is not None
    if ended:
        collided[collided_at] = 1
    return CollisionEpisode(
        frames=frames,
        states=rng.normal(size=(length, 6)),
        actions=rng.normal(size=(length, ACTION_DIM)),
        collided=collided,
        extra_actions=rng.normal(size=(T, ACTION_DIM)) if ended else np.zeros((0, ACTION_DIM)),
        ended_in_collision=ended,
        seed=seed,
    )


class TestLabeling:
    def test_timeout_episode_all_labels_zero(self):
        ds = label_episode(_episode(20), horizon=8)
        assert len(ds) == 13  # full windows only: 20 - 8 + 1
        assert ds.labels.sum() == 0

    def test_collision_at_relative_step_five(self):
        # window starting at t=0 of an episode that collides during step 4
        ds = label_episode(_episode(5, collided_at=4), horizon=8)
        assert np.array_equal(ds.labels[0], [0, 0, 0, 0, 1, 1, 1, 1])

    def test_collision_at_relative_step_one_all_ones(self):
        ds = label_episode(_episode(1, collided_at=0), horizon=8)
        assert np.array_equal(ds.labels[0], np.ones(8, np.uint8))

    def test_labels_monotone_for_every_window(self):
        for seed in range(5):
            length = 12
            ds = label_episode(_episode(length, collided_at=length - 1, seed=seed), horizon=6)
            diffs = np.diff(ds.labels.astype(np.int8), axis=1)
            assert np.all(diffs >= 0)

    def test_windows_past_collision_use_appended_actions(self):
        episode = _episode(4, collided_at=3, T=8)
        ds = label_episode(episode, horizon=8)
        assert len(ds) == 4
        # the last window starts at t=3 and needs 7 appended actions
        assert np.allclose(ds.actions[3][1:], episode.extra_actions[:7])
        assert np.array_equal(ds.labels[3], np.ones(8, np.uint8))

    def test_empty_episode_rejected(self):
        with pytest.raises(DatasetError, match="shorter"):
            label_episode(_episode(0), horizon=5)


class TestFlip:
    def _dp(self, seed=1):
        rng = np.random.default_rng(seed)
        frame = DepthFrame(rng.random((6, 8), dtype=np.float32), np.ones((6, 8), np.uint8),
                           np.zeros((6, 8), np.uint16))
        return CollisionDatapoint(frame, rng.normal(size=6), rng.normal(size=(5, 4)),
                                  (rng.random(5) > 0.5).astype(np.uint8))

    def test_flip_twice_is_identity(self):
        dp = self._dp()
        back = flip_augment(flip_augment(dp))
        assert np.array_equal(back.frame.x, dp.frame.x)
        assert np.array_equal(back.state, dp.state)
        assert np.array_equal(back.actions, dp.actions)
        assert np.array_equal(back.labels, dp.labels)

    def test_flip_negates_lateral_quantities_only(self):
        dp = self._dp(2)
        flipped = flip_augment(dp)
        assert np.array_equal(flipped.frame.x, dp.frame.x[:, ::-1])
        assert flipped.state[1] == -dp.state[1]   # v_y
        assert flipped.state[3] == -dp.state[3]   # yaw rate
        assert flipped.state[4] == -dp.state[4]   # roll
        assert flipped.state[0] == dp.state[0]    # v_x untouched
        assert flipped.state[5] == dp.state[5]    # pitch untouched
        assert np.array_equal(flipped.actions[:, 1], -dp.actions[:, 1])
        assert np.array_equal(flipped.actions[:, 3], -dp.actions[:, 3])
        assert np.array_equal(flipped.labels, dp.labels)

    def test_symmetric_frame_with_zero_lateral_state_is_fixed_point(self):
        x = np.zeros((4, 6), np.float32)
        x[:, 2:4] = 0.5  # symmetric about the vertical centerline
        frame = DepthFrame(x, np.ones_like(x, dtype=np.uint8), np.zeros_like(x, dtype=np.uint16))
        state = np.array([1.0, 0.0, 0.1, 0.0, 0.0, 0.05])
        actions = np.tile([0.8, 0.0, 0.0, 0.0], (3, 1))
        dp = CollisionDatapoint(frame, state, actions, np.zeros(3, np.uint8))
        flipped = flip_augment(dp)
        assert np.array_equal(flipped.frame.x, dp.frame.x)
        assert np.array_equal(flipped.state, dp.state)
        assert np.array_equal(flipped.actions, dp.actions)

    def test_set_level_flip_matches_pointwise(self):
        ds = label_episode(_episode(10, collided_at=9), horizon=4)
        whole = flip_augment_set(ds)
        for i in range(len(ds)):
            one = flip_augment(CollisionDatapoint(ds.frames.frame(i), ds.states[i],
                                                  ds.actions[i], ds.labels[i]))
            assert np.array_equal(whole.frames.x[i], one.frame.x)
            assert np.array_equal(whole.states[i], one.state)
            assert np.array_equal(whole.actions[i], one.actions)

    def test_augmented_set_doubles(self):
        ds = label_episode(_episode(10), horizon=4)
        assert len(with_flip_augmentation(ds)) == 2 * len(ds)


class TestEncode:
    def _vae(self):
        from depthnav.vae import SemanticVae, VaeConfig
        return SemanticVae(VaeConfig(height=6, width=8, latent_dim=3,
                                     enc_channels=(2, 2, 2, 2), hidden=8), seed=0)

    def test_encode_preserves_count_order_and_is_deterministic(self):
        ds = label_episode(_episode(12, collided_at=11), horizon=4)
        vae = self._vae()
        a = encode_dataset(ds, vae)
        b = encode_dataset(ds, vae)
        assert len(a) == len(ds)
        assert np.array_equal(a.mu, b.mu)
        assert np.array_equal(a.labels, ds.labels)
        # spot check: row i equals the single-frame encoding
        code = vae.encode(ds.frames.frame(5))
        assert np.allclose(a.mu[5], code.mu, atol=1e-6)

    def test_resolution_mismatch_rejected(self):
        ds = label_episode(_episode(4), horizon=2)
        from depthnav.vae import SemanticVae, VaeConfig
        wrong = SemanticVae(VaeConfig(height=12, width=16, latent_dim=3,
                                      enc_channels=(2, 2, 2, 2), hidden=8), seed=0)
        with pytest.raises(ShapeError):
            encode_dataset(ds, wrong)


class TestSplit:
    def _frames(self, n=100):
        rng = np.random.default_rng(0)
        return FrameSet(rng.random((n, 4, 5), dtype=np.float32),
                        np.ones((n, 4, 5), np.uint8), np.zeros((n, 4, 5), np.uint16))

    def test_eighty_twenty_of_one_hundred(self):
        train, val = split(self._frames(100), 0.8, seed=1)
        assert len(train) == 80 and len(val) == 20

    def test_union_is_original_and_disjoint(self):
        frames = self._frames(50)
        train, val = split(frames, 0.8, seed=2)
        joined = np.concatenate([train.x, val.x])
        assert joined.shape[0] == 50
        # every original row appears exactly once
        orig = {f.tobytes() for f in frames.x}
        new = [f.tobytes() for f in joined]
        assert orig == set(new) and len(new) == len(set(new))

    def test_same_seed_same_split(self):
        frames = self._frames(30)
        a1, _ = split(frames, 0.7, seed=3)
        a2, _ = split(frames, 0.7, seed=3)
        assert np.array_equal(a1.x, a2.x)

    def test_bad_ratio_rejected(self):
        with pytest.raises(DatasetError):
            split(self._frames(10), 1.2, seed=0)


class TestContainers:
    def test_frame_set_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        frames = FrameSet(rng.random((7, 6, 8), dtype=np.float32),
                          (rng.random((7, 6, 8)) > 0.5).astype(np.uint8),
                          rng.integers(0, 4, (7, 6, 8)).astype(np.uint16))
        frames.x[frames.valid == 0] = 0
        frames.seg[frames.valid == 0] = 0
        path = tmp_path / "f.dset"
        save_dataset(path, frames)
        loaded = load_dataset(path)
        assert np.array_equal(loaded.x, frames.x)
        assert np.array_equal(loaded.valid, frames.valid)
        assert np.array_equal(loaded.seg, frames.seg)
        path2 = tmp_path / "g.dset"
        save_dataset(path2, loaded)
        assert path.read_bytes() == path2.read_bytes()

    def test_collision_set_round_trip(self, tmp_path):
        ds = label_episode(_episode(10, collided_at=9), horizon=4)
        path = tmp_path / "c.dset"
        save_dataset(path, ds)
        loaded = load_dataset(path)
        assert isinstance(loaded, CollisionSet)
        assert np.array_equal(loaded.frames.x, ds.frames.x)
        assert np.array_equal(loaded.states, ds.states)
        assert np.array_equal(loaded.actions, ds.actions)
        assert np.array_equal(loaded.labels, ds.labels)

    def test_latent_set_round_trip_and_info(self, tmp_path):
        rng = np.random.default_rng(2)
        ds = LatentCollisionSet(rng.random((9, 5)).astype(np.float32),
                                rng.random((9, 6)).astype(np.float32),
                                rng.random((9, 3, 4)).astype(np.float32),
                                (rng.random((9, 3)) > 0.5).astype(np.uint8))
        path = tmp_path / "z.dset"
        save_dataset(path, ds)
        info = dataset_info(path)
        assert info["kind"] == "colz" and info["count"] == 9
        assert info["latent_dim"] == 5 and info["horizon"] == 3
        loaded = load_dataset(path)
        assert np.array_equal(loaded.mu, ds.mu)

    def test_crc_corruption_detected(self, tmp_path):
        ds = label_episode(_episode(6, collided_at=5), horizon=3)
        path = tmp_path / "c.dset"
        save_dataset(path, ds)
        blob = bytearray(path.read_bytes())
        blob[40] ^= 0x5A
        path.write_bytes(bytes(blob))
        with pytest.raises(DatasetError, match="CRC"):
            load_dataset(path)


class TestPgmImport:
    def _frames(self, n=5, quantized=True):
        rng = np.random.default_rng(3)
        q = rng.integers(1, 65534, size=(n, 6, 8)).astype(np.uint16)
        valid = (rng.random((n, 6, 8)) > 0.3).astype(np.uint8)
        q[valid == 0] = 0
        x = np.where(valid > 0, q.astype(np.float32) / 65534.0, 0.0).astype(np.float32)
        seg = rng.integers(0, 3, (n, 6, 8)).astype(np.uint16)
        seg[valid == 0] = 0
        return FrameSet(x, valid, seg)

    def test_export_import_round_trip_identical(self, tmp_path):
        frames = self._frames()
        export_frames(frames, tmp_path)
        back = import_depth_images(tmp_path)
        assert np.array_equal(back.x, frames.x)
        assert np.array_equal(back.valid, frames.valid)
        assert np.array_equal(back.seg, frames.seg)

    def test_missing_label_file_gives_zero_seg(self, tmp_path):
        frames = self._frames(2)
        export_frames(frames, tmp_path)
        for p in tmp_path.glob("*_seg.pgm"):
            p.unlink()
        back = import_depth_images(tmp_path)
        assert back.seg.sum() == 0

    def test_all_zero_depth_file_is_all_invalid(self, tmp_path):
        from depthnav.camera import write_pgm
        write_pgm(tmp_path / "0000.pgm", np.zeros((6, 8), np.uint16), 65535)
        back = import_depth_images(tmp_path)
        assert back.valid.sum() == 0

    def test_mixed_resolutions_rejected_with_file_report(self, tmp_path):
        from depthnav.camera import write_pgm
        write_pgm(tmp_path / "0000.pgm", np.full((6, 8), 100, np.uint16), 65535)
        write_pgm(tmp_path / "0001.pgm", np.full((5, 8), 100, np.uint16), 65535)
        with pytest.raises(DatasetError, match="0001"):
            import_depth_images(tmp_path)
