"""Dataset construction and persistence.

Three payload kinds share one binary container:

  vaef  depth-frame sets {x, valid, seg} for autoencoder training
  cold  collision datapoints (frame, partial state, action window, labels)
  colz  latent collision datapoints (mu instead of the frame)

Container layout (little-endian): magic "DSET", version u32, kind 4 bytes,
dims H, W, J, T as u32 (zero when unused), count u32, payload arrays in a
fixed per-kind order, trailing CRC32.  Round-trips are bit-exact.

Collision labels are monotone within a window: once a window step collides,
every later step stays 1.  Windows that extend past a collision ending use
the episode's appended random actions with labels pinned to 1.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import DepthFrame, depth_pgm_to_frame, frame_to_depth_pgm, read_pgm, write_pgm
from .errors import DatasetError, ShapeError
from .world import ACTION_DIM, CollisionEpisode, PARTIAL_STATE_DIM

DATASET_MAGIC = b"DSET"
DATASET_VERSION = 1


# ---------------------------------------------------------------------------
# In-memory sets
# ---------------------------------------------------------------------------

@dataclass
class FrameSet:
    x: np.ndarray      # (N, H, W) float32
    valid: np.ndarray  # (N, H, W) uint8
    seg: np.ndarray    # (N, H, W) uint16

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float32)
        self.valid = np.asarray(self.valid, dtype=np.uint8)
        self.seg = np.asarray(self.seg, dtype=np.uint16)

    def __len__(self):
        return self.x.shape[0]

    def frame(self, i: int) -> DepthFrame:
        return DepthFrame(self.x[i], self.valid[i], self.seg[i])

    def subset(self, idx) -> "FrameSet":
        return FrameSet(self.x[idx], self.valid[idx], self.seg[idx])

    @classmethod
    def from_frames(cls, frames) -> "FrameSet":
        return cls(np.stack([f.x for f in frames]),
                   np.stack([f.valid for f in frames]),
                   np.stack([f.seg for f in frames]))

    @classmethod
    def concat(cls, sets) -> "FrameSet":
        return cls(np.concatenate([s.x for s in sets]),
                   np.concatenate([s.valid for s in sets]),
                   np.concatenate([s.seg for s in sets]))


@dataclass
class CollisionSet:
    """Datapoints d: (frame, partial state, T-step action window, T labels)."""

    frames: FrameSet
    states: np.ndarray   # (N, 6) float32
    actions: np.ndarray  # (N, T, 4) float32
    labels: np.ndarray   # (N, T) uint8

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float32).reshape(-1, PARTIAL_STATE_DIM)
        self.actions = np.asarray(self.actions, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.uint8)

    def __len__(self):
        return len(self.states)

    @property
    def horizon(self) -> int:
        return self.actions.shape[1]

    def subset(self, idx) -> "CollisionSet":
        return CollisionSet(self.frames.subset(idx), self.states[idx],
                            self.actions[idx], self.labels[idx])

    @classmethod
    def concat(cls, sets) -> "CollisionSet":
        return cls(FrameSet.concat([s.frames for s in sets]),
                   np.concatenate([s.states for s in sets]),
                   np.concatenate([s.actions for s in sets]),
                   np.concatenate([s.labels for s in sets]))


@dataclass
class LatentCollisionSet:
    """Datapoints d': (mu, partial state, action window, labels)."""

    mu: np.ndarray       # (N, J) float32
    states: np.ndarray
    actions: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float32)
        self.states = np.asarray(self.states, dtype=np.float32).reshape(-1, PARTIAL_STATE_DIM)
        self.actions = np.asarray(self.actions, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.uint8)

    def __len__(self):
        return len(self.states)

    @property
    def horizon(self) -> int:
        return self.actions.shape[1]

    def subset(self, idx) -> "LatentCollisionSet":
        return LatentCollisionSet(self.mu[idx], self.states[idx],
                                  self.actions[idx], self.labels[idx])


@dataclass
class CollisionDatapoint:
    frame: DepthFrame
    state: np.ndarray
    actions: np.ndarray
    labels: np.ndarray


# ---------------------------------------------------------------------------
# Episode labeling and augmentation
# ---------------------------------------------------------------------------

def label_episode(episode: CollisionEpisode, horizon: int, stride: int = 1) -> CollisionSet:
    """Sliding-window datapoints: label i is 1 iff a collision happened at or
    before the i-th step after the window start.

    Collision-ended episodes emit a window at every step (the appended
    random actions extend windows past the end, labels stay 1); timeout
    episodes only emit full in-range windows, all labeled 0.
    """
    length = len(episode)
    if length < 1:
        raise DatasetError("episode shorter than 1 step")
    if episode.ended_in_collision:
        starts = range(0, length, stride)
        all_actions = np.concatenate([episode.actions, episode.extra_actions])
    else:
        starts = range(0, length - horizon + 1, stride)
        all_actions = episode.actions
    cum = np.cumsum(episode.collided) > 0  # collided at or before step i
    frames, states, actions, labels = [], [], [], []
    for t in starts:
        if t + horizon > len(all_actions):
            break
        lab = np.ones(horizon, dtype=np.uint8)
        upto = min(t + horizon, length)
        lab[: upto - t] = cum[t:upto]
        frames.append(episode.frames[t])
        states.append(episode.states[t])
        actions.append(all_actions[t : t + horizon])
        labels.append(lab)
    if not frames:
        return CollisionSet(
            FrameSet(np.zeros((0, *episode.frames[0].shape), np.float32),
                     np.zeros((0, *episode.frames[0].shape), np.uint8),
                     np.zeros((0, *episode.frames[0].shape), np.uint16)),
            np.zeros((0, PARTIAL_STATE_DIM)), np.zeros((0, horizon, ACTION_DIM)),
            np.zeros((0, horizon), np.uint8))
    return CollisionSet(FrameSet.from_frames(frames), np.asarray(states),
                        np.asarray(actions), np.asarray(labels))


def flip_augment(dp: CollisionDatapoint) -> CollisionDatapoint:
    """Mirror a datapoint left-right: image flipped, lateral velocity, yaw
    rate, roll, lateral references and steering negated; labels unchanged."""
    frame = DepthFrame(np.ascontiguousarray(dp.frame.x[:, ::-1]),
                       np.ascontiguousarray(dp.frame.valid[:, ::-1]),
                       np.ascontiguousarray(dp.frame.seg[:, ::-1]))
    state = dp.state.copy()
    state[[1, 3, 4]] *= -1.0  # v_y, yaw rate, roll
    actions = dp.actions.copy()
    actions[:, 1] *= -1.0
    actions[:, 3] *= -1.0
    return CollisionDatapoint(frame, state, actions, dp.labels.copy())


def flip_augment_set(ds: CollisionSet) -> CollisionSet:
    """Whole-set mirror (same transform as flip_augment, vectorized)."""
    frames = FrameSet(np.ascontiguousarray(ds.frames.x[:, :, ::-1]),
                      np.ascontiguousarray(ds.frames.valid[:, :, ::-1]),
                      np.ascontiguousarray(ds.frames.seg[:, :, ::-1]))
    states = ds.states.copy()
    states[:, [1, 3, 4]] *= -1.0
    actions = ds.actions.copy()
    actions[:, :, 1] *= -1.0
    actions[:, :, 3] *= -1.0
    return CollisionSet(frames, states, actions, ds.labels.copy())


def with_flip_augmentation(ds: CollisionSet) -> CollisionSet:
    return CollisionSet.concat([ds, flip_augment_set(ds)])


def encode_dataset(ds: CollisionSet, vae, batch_size: int = 64) -> LatentCollisionSet:
    """Replace every frame by its posterior mean under a frozen autoencoder."""
    if ds.frames.x.shape[1:] != (vae.cfg.height, vae.cfg.width):
        raise ShapeError(
            f"dataset frames are {ds.frames.x.shape[1:]}, encoder wants "
            f"{(vae.cfg.height, vae.cfg.width)}"
        )
    chunks = []
    for lo in range(0, len(ds), batch_size):
        mu, _ = vae.encode_batch(ds.frames.x[lo : lo + batch_size])
        chunks.append(mu)
    mu = np.concatenate(chunks) if chunks else np.zeros((0, vae.cfg.latent_dim), np.float32)
    return LatentCollisionSet(mu, ds.states.copy(), ds.actions.copy(), ds.labels.copy())


def split(dataset, ratio: float, seed: int):
    """Disjoint, exhaustive (train, validation) split by seeded shuffle."""
    if not 0.0 < ratio < 1.0:
        raise DatasetError(f"split ratio must be in (0, 1), got {ratio}")
    n = len(dataset)
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(ratio * n))
    return dataset.subset(perm[:n_train]), dataset.subset(perm[n_train:])


# ---------------------------------------------------------------------------
# Binary container
# ---------------------------------------------------------------------------

def _pack_arrays(arrays) -> bytes:
    return b"".join(np.ascontiguousarray(a).tobytes() for a in arrays)


def save_dataset(path, ds) -> None:
    if isinstance(ds, FrameSet):
        kind, dims = b"vaef", (ds.x.shape[1], ds.x.shape[2], 0, 0)
        arrays = [ds.x.astype("<f4"), ds.valid, ds.seg.astype("<u2")]
    elif isinstance(ds, CollisionSet):
        kind = b"cold"
        dims = (ds.frames.x.shape[1], ds.frames.x.shape[2], 0, ds.horizon)
        arrays = [ds.frames.x.astype("<f4"), ds.frames.valid, ds.frames.seg.astype("<u2"),
                  ds.states.astype("<f4"), ds.actions.astype("<f4"), ds.labels]
    elif isinstance(ds, LatentCollisionSet):
        kind = b"colz"
        dims = (0, 0, ds.mu.shape[1], ds.horizon)
        arrays = [ds.mu.astype("<f4"), ds.states.astype("<f4"),
                  ds.actions.astype("<f4"), ds.labels]
    else:
        raise DatasetError(f"cannot serialize {type(ds).__name__}")
    head = DATASET_MAGIC + struct.pack("<I", DATASET_VERSION) + kind
    head += struct.pack("<4I", *dims) + struct.pack("<I", len(ds))
    blob = head + _pack_arrays(arrays)
    blob += struct.pack("<I", zlib.crc32(blob) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(blob)


def _read_array(blob, off, dtype, shape):
    count = int(np.prod(shape)) if shape else 0
    arr = np.frombuffer(blob, dtype=dtype, count=count, offset=off).reshape(shape).copy()
    return arr, off + count * np.dtype(dtype).itemsize


def dataset_info(path) -> dict:
    """Header fields only (kind, dims, count) without loading the payload."""
    with open(path, "rb") as fh:
        head = fh.read(32)
    if len(head) < 32 or head[:4] != DATASET_MAGIC:
        raise DatasetError(f"{path}: not a dataset container")
    version = struct.unpack_from("<I", head, 4)[0]
    kind = head[8:12].decode("ascii")
    h, w, j, t = struct.unpack_from("<4I", head, 12)
    count = struct.unpack_from("<I", head, 28)[0]
    return {"version": version, "kind": kind, "height": h, "width": w,
            "latent_dim": j, "horizon": t, "count": count}


def load_dataset(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 36 or blob[:4] != DATASET_MAGIC:
        raise DatasetError(f"{path}: not a dataset container")
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != struct.unpack("<I", blob[-4:])[0]:
        raise DatasetError(f"{path}: CRC mismatch, container corrupt")
    info = dataset_info(path)
    if info["version"] != DATASET_VERSION:
        raise DatasetError(f"{path}: unsupported container version {info['version']}")
    n, h, w = info["count"], info["height"], info["width"]
    j, t = info["latent_dim"], info["horizon"]
    off = 32
    if info["kind"] == "vaef":
        x, off = _read_array(blob, off, "<f4", (n, h, w))
        valid, off = _read_array(blob, off, "u1", (n, h, w))
        seg, off = _read_array(blob, off, "<u2", (n, h, w))
        out = FrameSet(x, valid, seg)
    elif info["kind"] == "cold":
        x, off = _read_array(blob, off, "<f4", (n, h, w))
        valid, off = _read_array(blob, off, "u1", (n, h, w))
        seg, off = _read_array(blob, off, "<u2", (n, h, w))
        states, off = _read_array(blob, off, "<f4", (n, PARTIAL_STATE_DIM))
        actions, off = _read_array(blob, off, "<f4", (n, t, ACTION_DIM))
        labels, off = _read_array(blob, off, "u1", (n, t))
        out = CollisionSet(FrameSet(x, valid, seg), states, actions, labels)
    elif info["kind"] == "colz":
        mu, off = _read_array(blob, off, "<f4", (n, j))
        states, off = _read_array(blob, off, "<f4", (n, PARTIAL_STATE_DIM))
        actions, off = _read_array(blob, off, "<f4", (n, t, ACTION_DIM))
        labels, off = _read_array(blob, off, "u1", (n, t))
        out = LatentCollisionSet(mu, states, actions, labels)
    else:
        raise DatasetError(f"{path}: unknown payload kind {info['kind']!r}")
    if off != len(blob) - 4:
        raise DatasetError(f"{path}: payload size mismatch")
    return out


# ---------------------------------------------------------------------------
# PGM directory import/export
# ---------------------------------------------------------------------------

def export_frames(frames: FrameSet, directory) -> None:
    """Write NNNN.pgm (16-bit depth), NNNN_val.pgm (8-bit), NNNN_seg.pgm
    (16-bit instance IDs) per frame.  Depth is quantized to the 16-bit grid."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i in range(len(frames)):
        f = frames.frame(i)
        write_pgm(directory / f"{i:04d}.pgm", frame_to_depth_pgm(f), 65535)
        write_pgm(directory / f"{i:04d}_val.pgm", f.valid * 255, 255)
        write_pgm(directory / f"{i:04d}_seg.pgm", f.seg, 65535)


def import_depth_images(directory) -> FrameSet:
    """Build a frame set from 16-bit depth PGMs plus optional *_seg.pgm labels.

    Validity is inferred from zero/saturated depth values; label values map
    directly to instance IDs.  Mixed resolutions are rejected per file.
    """
    directory = Path(directory)
    depth_files = sorted(p for p in directory.glob("*.pgm")
                         if not p.stem.endswith(("_val", "_seg")))
    if not depth_files:
        raise DatasetError(f"{directory}: no depth PGM files found")
    frames, shape, bad = [], None, []
    for path in depth_files:
        depth, _ = read_pgm(path)
        seg_path = path.with_name(path.stem + "_seg.pgm")
        seg = read_pgm(seg_path)[0].astype(np.uint16) if seg_path.exists() else None
        if shape is None:
            shape = depth.shape
        if depth.shape != shape or (seg is not None and seg.shape != shape):
            bad.append(path.name)
            continue
        frames.append(depth_pgm_to_frame(depth.astype(np.uint16), seg))
    if bad:
        raise DatasetError(f"{directory}: mixed resolutions in {bad}")
    return FrameSet.from_frames(frames)
