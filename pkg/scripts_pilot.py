"""Pilot run: train the full desk stack, report the acceptance-relevant
numbers, and dump artifacts for inspection.  Throwaway tuning script."""

import sys
import time

import numpy as np

from depthnav.camera import CameraModel, NoiseParams
from depthnav.cpn import CpnConfig, train_cpn
from depthnav.data import split
from depthnav.evaluation import (
    MissionSetup, end_to_end_arm, eval_reconstruction, fft_reconstructor,
    modular_arm, oracle_arm, run_campaign, vae_reconstructor,
)
from depthnav.pipeline import (
    build_latent_dataset, collect_collision_data, render_vae_corpus,
)
from depthnav.vae import VaeConfig, train_vae

t0 = time.time()
def tick(msg):
    print(f"[{time.time()-t0:7.1f}s] {msg}", flush=True)

cam = CameraModel()
noise = NoiseParams()
vae_cfg = VaeConfig()
SEED = 0

tick("rendering corpus (2000 frames)")
clean, noisy = render_vae_corpus(2000, cam, noise, seed=SEED + 1)
tick(f"corpus done; seg px frac {float((noisy.seg > 0).mean()):.4f}, "
     f"frames with seg {float(((noisy.seg > 0).any(axis=(1, 2))).mean()):.3f}")

train_frames, val_frames = split(noisy, 0.8, seed=SEED + 10)

tick("training seVAE 40 epochs")
sevae, hist_s = train_vae(noisy, vae_cfg, seed=SEED + 2, epochs=40, log_every=10)
tick("training vanilla 40 epochs")
vanilla, hist_v = train_vae(noisy, vae_cfg, seed=SEED + 2, epochs=40, vanilla=True, log_every=10)

tick("reconstruction eval")
val_clean, val_noisy = split(clean, 0.8, seed=SEED + 10)[1], split(noisy, 0.8, seed=SEED + 10)[1]
report = eval_reconstruction(
    {"clean-sim": val_clean, "corrupted": val_noisy},
    {"fft": fft_reconstructor(64), "vanilla-vae": vae_reconstructor(vanilla),
     "sevae": vae_reconstructor(sevae)},
)
print(report.table())
sem_ratio = report.value("sevae", "corrupted", "semantic") / report.value("vanilla-vae", "corrupted", "semantic")
whole_ratio = report.value("vanilla-vae", "corrupted", "whole_image") / report.value("sevae", "corrupted", "whole_image")
print(f"sem ratio sevae/vanilla = {sem_ratio:.3f} (need <= 0.667)")
print(f"whole vanilla/sevae = {whole_ratio:.3f} (need <= 1.05)")
print(f"sevae sem vs fft sem: {report.value('sevae','corrupted','semantic'):.2f} vs "
      f"{report.value('fft','corrupted','semantic'):.2f}")

tick("collecting collisions (350 episodes)")
coll = collect_collision_data(350, cam, seed=SEED + 3)
tick(f"{len(coll)} datapoints, positive frac {float((coll.labels > 0).mean()):.3f}")

tick("building latent dataset")
lat = build_latent_dataset(coll, sevae, noise, seed=SEED + 4, max_range=cam.max_range)

tick("training modular CPN")
cpn_mod, hist_m = train_cpn(lat, CpnConfig(variant="modular", latent_dim=32, horizon=10),
                            seed=SEED + 5, epochs=25, log_every=5)
tick("training e2e CPN")
cpn_e2e, hist_e = train_cpn(coll, CpnConfig(variant="end-to-end", horizon=10),
                            seed=SEED + 6, epochs=25, log_every=5)

tick("pilot campaign: sparse + dense, 8 seeds")
setup = MissionSetup(camera=cam, noise=noise)
arms = {"modular": modular_arm(sevae, cpn_mod), "end-to-end": end_to_end_arm(cpn_e2e),
        "oracle": oracle_arm()}
rep = run_campaign(arms, environments=("sparse", "dense"), runs=8, base_seed=1000,
                   setup=setup, progress=lambda e, s, n, r: tick(f"  {e} {s} {n}: {r.outcome}"))
print(rep.table())

# save everything for later reuse
import pathlib
out = pathlib.Path("/tmp/stack0")
out.mkdir(exist_ok=True)
sevae.save(out / "sevae.ckpt")
vanilla.save(out / "vanilla_vae.ckpt")
cpn_mod.save(out / "cpn_modular.ckpt")
cpn_e2e.save(out / "cpn_end_to_end.ckpt")
from depthnav.data import save_dataset
save_dataset(out / "corpus_clean.dset", clean)
save_dataset(out / "corpus_noisy.dset", noisy)
save_dataset(out / "collisions.dset", coll)
tick("artifacts saved to /tmp/stack0")
