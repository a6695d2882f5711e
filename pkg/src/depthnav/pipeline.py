"""End-to-end data plumbing: render autoencoder corpora, collect collision
episodes, corrupt copies deterministically, and stitch the training stages
together.  Everything is reproducible from (config, seed)."""

from __future__ import annotations

import numpy as np

from .camera import CameraModel, NoiseParams, corrupt, render_from_state
from .cpn import CpnConfig, train_cpn
from .data import (
    CollisionSet,
    FrameSet,
    LatentCollisionSet,
    encode_dataset,
    label_episode,
    with_flip_augmentation,
)
from .errors import DatasetError
from .vae import SemanticVae, VaeConfig, train_vae
from .world import (
    DynamicsParams,
    desk_world_params,
    find_free_start,
    generate_world,
    hover_state,
    min_clearance,
    rollout_episode,
    wrap_angle,
)


def _frame_seed(base_seed: int, index: int) -> int:
    return int(np.random.SeedSequence((base_seed, index)).generate_state(1)[0])


def corpus_world_params(env: str = "medium", seed: int = 0) -> "WorldGenParams":
    """Data-collection worlds: a few big smooth structures plus dense thin-rod
    fields.  The background stays cheap to encode while the rods carry most
    of the positional entropy, the regime where an unweighted loss sacrifices
    them first.  The env argument keeps the signature interchangeable with
    the evaluation presets."""
    from .world import WorldGenParams

    return WorldGenParams(radii=(2.5, 2.5, 0.55, 0.5), section_size=15.0,
                          large_footprint=(0.5, 2.0), large_height=(1.5, 4.0),
                          rod_height=(1.2, 3.8), spawn_clear=0.6, seed=seed)


def corrupt_frameset(frames: FrameSet, noise: NoiseParams, base_seed: int,
                     max_range: float) -> FrameSet:
    """Per-frame corruption with seeds derived from (base_seed, index)."""
    out_x = np.empty_like(frames.x)
    out_val = np.empty_like(frames.valid)
    out_seg = np.empty_like(frames.seg)
    for i in range(len(frames)):
        noisy = corrupt(frames.frame(i), noise.with_seed(_frame_seed(base_seed, i)), max_range)
        out_x[i], out_val[i], out_seg[i] = noisy.x, noisy.valid, noisy.seg
    return FrameSet(out_x, out_val, out_seg)


def render_vae_corpus(n_frames: int, camera: CameraModel, noise: NoiseParams, seed: int,
                      environments=("sparse", "medium", "dense"), worlds_per_env: int = 2,
                      world_params_fn=desk_world_params,
                      dynamics: DynamicsParams = DynamicsParams(),
                      aimed_fraction: float = 0.5) -> tuple[FrameSet, FrameSet]:
    """Free-pose renders across generated worlds.

    A fraction of the poses aim at a nearby thin obstacle (the stance a robot
    actually encounters them from); the rest are uniform random views.
    Returns (clean, corrupted) frame sets of equal length; corruption seeds
    derive from `seed` so the pair is reproducible.
    """
    if n_frames < 1:
        raise DatasetError("corpus needs at least one frame")
    rng = np.random.default_rng(seed)
    worlds = []
    for env in environments:
        for w in range(worlds_per_env):
            worlds.append(generate_world(world_params_fn(env, seed=int(rng.integers(2**31)))))
    frames = []
    while len(frames) < n_frames:
        world = worlds[int(rng.integers(len(worlds)))]
        x0, y0, x1, y1 = world.bounds
        # a render pose only needs the camera clear of geometry, not a full
        # flight-clearance bubble (rod fields are tighter than the robot)
        aim_rods = rng.random() < aimed_fraction
        thin = world.cylinders[world.cylinders[:, 4] >= 1]
        if aim_rods and len(thin):
            rod = thin[int(rng.integers(len(thin)))]
            dist = float(rng.uniform(0.8, 3.5))
            bearing = float(rng.uniform(-np.pi, np.pi))
            pos = np.array([rod[0] + dist * np.cos(bearing),
                            rod[1] + dist * np.sin(bearing),
                            float(rng.uniform(0.7, 1.6))])
            if not (x0 < pos[0] < x1 and y0 < pos[1] < y1):
                continue
            if min_clearance(world, pos) <= 0.25:
                continue
            state = hover_state(pos, yaw=wrap_angle(bearing + np.pi
                                                    + float(rng.uniform(-0.35, 0.35))))
        else:
            try:
                state = find_free_start(world, rng, (x0 + 0.5, x1 - 0.5),
                                        (y0 + 0.5, y1 - 0.5),
                                        z=float(rng.uniform(0.7, 1.6)),
                                        radius=0.15, margin=0.1, attempts=50)
            except Exception:
                continue
            state.yaw = float(rng.uniform(-np.pi, np.pi))
        state.pitch = float(rng.uniform(-0.15, 0.15))
        frames.append(render_from_state(world, camera, state))
    clean = FrameSet.from_frames(frames)
    noisy = corrupt_frameset(clean, noise, seed, camera.max_range)
    return clean, noisy


def collect_collision_data(n_episodes: int, camera: CameraModel, seed: int,
                           horizon: int = 10, dt: float = 0.25, max_steps: int = 60,
                           environments=("sparse", "medium", "dense"), worlds_per_env: int = 2,
                           world_params_fn=desk_world_params,
                           dynamics: DynamicsParams = DynamicsParams(),
                           flip: bool = True) -> CollisionSet:
    """Roll randomized action sequences in generated worlds and label the
    windows.  Frames are clean renders; corrupt copies are a separate,
    deterministic step (corrupt_frameset)."""
    rng = np.random.default_rng(seed)
    worlds = []
    for env in environments:
        for w in range(worlds_per_env):
            worlds.append(generate_world(world_params_fn(env, seed=int(rng.integers(2**31)))))
    sets = []
    made = 0
    while made < n_episodes:
        world = worlds[int(rng.integers(len(worlds)))]
        x0, y0, x1, y1 = world.bounds
        try:
            start = find_free_start(world, rng, (x0 + 0.5, x1 - 1.0), (y0 + 0.5, y1 - 0.5),
                                    z=1.0, radius=dynamics.collision_radius, attempts=50)
        except Exception:
            continue
        start.yaw = float(rng.uniform(-np.pi, np.pi))
        sensor = lambda st: render_from_state(world, camera, st)
        episode = rollout_episode(world, start, sensor, seed=int(rng.integers(2**31)),
                                  T=horizon, dt=dt, max_steps=max_steps, dynamics=dynamics)
        labeled = label_episode(episode, horizon)
        if len(labeled):
            sets.append(labeled)
        made += 1
    if not sets:
        raise DatasetError("no collision datapoints collected")
    ds = CollisionSet.concat(sets)
    return with_flip_augmentation(ds) if flip else ds


def build_latent_dataset(ds_clean: CollisionSet, vae: SemanticVae, noise: NoiseParams,
                         seed: int, max_range: float) -> LatentCollisionSet:
    """Corrupt the collision frames, then encode them with the frozen VAE."""
    noisy_frames = corrupt_frameset(ds_clean.frames, noise, seed, max_range)
    noisy_set = CollisionSet(noisy_frames, ds_clean.states, ds_clean.actions, ds_clean.labels)
    return encode_dataset(noisy_set, vae)


# ---------------------------------------------------------------------------
# One-call training pipeline (used by tests, demos, and the CLI)
# ---------------------------------------------------------------------------

class TrainedStack:
    """Everything the campaign needs: both VAEs and both predictors."""

    def __init__(self, sevae, vanilla_vae, cpn_modular, cpn_end_to_end,
                 corpus_clean, corpus_noisy, collisions_clean):
        self.sevae = sevae
        self.vanilla_vae = vanilla_vae
        self.cpn_modular = cpn_modular
        self.cpn_end_to_end = cpn_end_to_end
        self.corpus_clean = corpus_clean
        self.corpus_noisy = corpus_noisy
        self.collisions_clean = collisions_clean


def train_full_stack(seed: int = 0, n_frames: int = 2000, n_episodes: int = 350,
                     camera: CameraModel = CameraModel(), noise: NoiseParams = NoiseParams(),
                     vae_cfg: VaeConfig = VaeConfig(), vae_epochs: int = 40,
                     cpn_epochs: int = 25, e2e_epochs: int = 25, horizon: int = 10,
                     dt: float = 0.25, out_dir=None, log_every: int = 0) -> TrainedStack:
    """Corpus -> seVAE + vanilla VAE -> collision data -> both predictors."""
    clean, noisy = render_vae_corpus(n_frames, camera, noise, seed=seed + 1)
    sevae, _ = train_vae(noisy, vae_cfg, seed=seed + 2, epochs=vae_epochs,
                         out_dir=out_dir, log_every=log_every)
    vanilla, _ = train_vae(noisy, vae_cfg, seed=seed + 2, epochs=vae_epochs, vanilla=True,
                           out_dir=out_dir, log_every=log_every)
    collisions = collect_collision_data(n_episodes, camera, seed=seed + 3,
                                        horizon=horizon, dt=dt)
    latents = build_latent_dataset(collisions, sevae, noise, seed=seed + 4, max_range=camera.max_range)
    cpn_mod, _ = train_cpn(latents, CpnConfig(variant="modular", latent_dim=vae_cfg.latent_dim,
                                              horizon=horizon),
                           seed=seed + 5, epochs=cpn_epochs, out_dir=out_dir, log_every=log_every)
    cpn_e2e, _ = train_cpn(collisions, CpnConfig(variant="end-to-end", horizon=horizon,
                                                 image_hw=(camera.height, camera.width)),
                           seed=seed + 6, epochs=e2e_epochs, out_dir=out_dir, log_every=log_every)
    return TrainedStack(sevae, vanilla, cpn_mod, cpn_e2e, clean, noisy, collisions)
