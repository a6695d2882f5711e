"""Semantically-weighted variational autoencoder over depth frames.

The encoder (４ strided convolutions, dense trunk, two dense heads) maps a
depth image to a diagonal Gaussian (mu, logvar); the decoder mirrors it
with transposed convolutions and a final sigmoid.  Training minimizes

    L = L_recon + beta_norm * L_KL,     beta_norm = beta * J / (H * W)

where L_recon sums squared error over pixels, masked by validity and
multiplied by a per-pixel semantic weight: pixels of a labeled thin
instance with pixel count p get weight max(W_const / p, nu_min) when
p > p_min, everything else weight 1.  Invalid pixels contribute exactly
zero.  L_KL is the (non-negative) divergence from the unit Gaussian.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeError, TrainingError
from .nn import (
    Activation,
    AdamState,
    Conv2d,
    Deconv2d,
    Dense,
    Entry,
    Flatten,
    Reshape,
    Sequential,
    adam_step,
    conv_out_hw,
    load_checkpoint,
    sample_latent,
    sample_latent_backward,
    save_checkpoint,
)
from .nn.layers import LOGVAR_CLAMP


@dataclass(frozen=True)
class VaeConfig:
    height: int = 60
    width: int = 80
    latent_dim: int = 32
    beta: float = 1.0
    w_const: float = 6000.0
    nu_min: float = 15.0
    p_min: int = 40
    enc_channels: tuple[int, ...] = (8, 16, 32, 64)
    hidden: int = 256
    kernel: int = 3
    stride: int = 2
    lrelu_slope: float = 0.1

    def __post_init__(self):
        if self.latent_dim < 1 or self.beta <= 0 or self.w_const <= 0:
            raise ShapeError("need latent_dim >= 1, beta > 0, w_const > 0")
        if self.nu_min < 1 or self.p_min < 1:
            raise ShapeError("need nu_min >= 1 and p_min >= 1")

    @property
    def beta_norm(self) -> float:
        return self.beta * self.latent_dim / (self.height * self.width)


def paper_vae_config() -> VaeConfig:
    return VaeConfig(height=270, width=480, latent_dim=128)


@dataclass
class LatentCode:
    mu: np.ndarray
    logvar: np.ndarray


# ---------------------------------------------------------------------------
# Loss components
# ---------------------------------------------------------------------------

def kl_loss(mu: np.ndarray, logvar: np.ndarray) -> float:
    """KL(q || N(0, I)) = -1/2 sum_j (1 + logvar_j - mu_j^2 - sigma_j^2), >= 0."""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    if mu.shape != logvar.shape:
        raise ShapeError(f"kl_loss: shapes {mu.shape} vs {logvar.shape}")
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(logvar))):
        raise ShapeError("kl_loss: non-finite input")
    return float(-0.5 * np.sum(1.0 + logvar - mu * mu - np.exp(logvar)))


def _kl_batch(mu: np.ndarray, logvar: np.ndarray) -> np.ndarray:
    return -0.5 * np.sum(1.0 + logvar - mu * mu - np.exp(logvar), axis=1)


def semantic_weight_mask(seg: np.ndarray, w_const: float = 6000.0, nu_min: float = 15.0,
                         p_min: int = 40) -> np.ndarray:
    """Per-pixel weights from instance pixel counts; background stays 1."""
    seg = np.asarray(seg)
    counts = np.bincount(seg.ravel().astype(np.int64))
    table = np.ones(len(counts), dtype=np.float32)
    for iid in range(1, len(counts)):
        p = counts[iid]
        if p > p_min:
            table[iid] = max(w_const / p, nu_min)
    return table[seg.astype(np.int64)]


def recon_loss(x: np.ndarray, x_recon: np.ndarray, x_val: np.ndarray, x_seg: np.ndarray,
               w_const: float = 6000.0, nu_min: float = 15.0, p_min: int = 40) -> float:
    """Masked, semantically weighted sum of squared errors over one image."""
    x, x_recon = np.asarray(x, np.float64), np.asarray(x_recon, np.float64)
    if not (x.shape == x_recon.shape == x_val.shape == x_seg.shape):
        raise ShapeError(
            f"recon_loss: shapes {x.shape}, {x_recon.shape}, {x_val.shape}, {x_seg.shape}"
        )
    lam = semantic_weight_mask(x_seg, w_const, nu_min, p_min)
    return float(np.sum((x - x_recon) ** 2 * (x_val > 0) * lam))


def total_loss(x, x_recon, x_val, x_seg, mu, logvar, cfg: VaeConfig) -> float:
    return recon_loss(x, x_recon, x_val, x_seg, cfg.w_const, cfg.nu_min, cfg.p_min) \
        + cfg.beta_norm * kl_loss(mu, logvar)


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

class SemanticVae:
    """Encoder/decoder pair; parameters live in the layer objects."""

    def __init__(self, cfg: VaeConfig, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        k = (cfg.kernel, cfg.kernel)
        trace = [(cfg.height, cfg.width)]
        layers = []
        in_ch = 1
        for i, ch in enumerate(cfg.enc_channels):
            layers.append(Conv2d(in_ch, ch, k, cfg.stride, rng=rng, name=f"enc{i}", dtype=dtype))
            layers.append(Activation("lrelu", cfg.lrelu_slope, name=f"enc{i}a", dtype=dtype))
            trace.append(conv_out_hw(trace[-1], k, cfg.stride, cfg.kernel // 2))
            in_ch = ch
        self.flat_hw = trace[-1]
        flat_dim = cfg.enc_channels[-1] * trace[-1][0] * trace[-1][1]
        layers.append(Flatten(name="encf", dtype=dtype))
        layers.append(Dense(flat_dim, cfg.hidden, rng=rng, name="ench", dtype=dtype))
        layers.append(Activation("lrelu", cfg.lrelu_slope, name="encha", dtype=dtype))
        self.encoder = Sequential(layers)
        self.mu_head = Dense(cfg.hidden, cfg.latent_dim, rng=rng, name="mu", dtype=dtype)
        self.logvar_head = Dense(cfg.hidden, cfg.latent_dim, rng=rng, name="logvar", dtype=dtype)

        dec = [
            Dense(cfg.latent_dim, cfg.hidden, rng=rng, name="dech", dtype=dtype),
            Activation("lrelu", cfg.lrelu_slope, name="decha", dtype=dtype),
            Dense(cfg.hidden, flat_dim, rng=rng, name="decf", dtype=dtype),
            Activation("lrelu", cfg.lrelu_slope, name="decfa", dtype=dtype),
            Reshape((cfg.enc_channels[-1], *trace[-1]), name="decr", dtype=dtype),
        ]
        chans = list(cfg.enc_channels[::-1][1:]) + [1]
        in_ch = cfg.enc_channels[-1]
        for i, (ch, out_hw) in enumerate(zip(chans, trace[-2::-1])):
            dec.append(Deconv2d(in_ch, ch, out_hw, k, cfg.stride, rng=rng, name=f"dec{i}", dtype=dtype))
            if i < len(chans) - 1:
                dec.append(Activation("lrelu", cfg.lrelu_slope, name=f"dec{i}a", dtype=dtype))
            in_ch = ch
        dec.append(Activation("sigmoid", name="deco", dtype=dtype))
        self.decoder = Sequential(dec)

    # -- parameter plumbing ------------------------------------------------
    def params(self) -> dict[str, np.ndarray]:
        out = dict(self.encoder.params())
        for key, val in self.mu_head.params.items():
            out[f"mu.{key}"] = val
        for key, val in self.logvar_head.params.items():
            out[f"logvar.{key}"] = val
        out.update({f"dec.{k}": v for k, v in self.decoder.params().items()})
        return out

    def grads(self) -> dict[str, np.ndarray]:
        out = dict(self.encoder.grads())
        for key, val in self.mu_head.grads.items():
            out[f"mu.{key}"] = val
        for key, val in self.logvar_head.grads.items():
            out[f"logvar.{key}"] = val
        out.update({f"dec.{k}": v for k, v in self.decoder.grads().items()})
        return out

    def zero_grad(self):
        self.encoder.zero_grad()
        self.mu_head.zero_grad()
        self.logvar_head.zero_grad()
        self.decoder.zero_grad()

    def _all_layers(self):
        return self.encoder.layers + [self.mu_head, self.logvar_head] + self.decoder.layers

    # -- inference ----------------------------------------------------------
    def _check_hw(self, arr):
        if arr.shape[-2:] != (self.cfg.height, self.cfg.width):
            raise ShapeError(
                f"frame is {arr.shape[-2]}x{arr.shape[-1]}, encoder wants "
                f"{self.cfg.height}x{self.cfg.width} (no silent resampling)"
            )

    def encode_batch(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """x: (N, H, W) normalized depth with invalid pixels already zeroed."""
        self._check_hw(x)
        h = self.encoder.forward(np.ascontiguousarray(x[:, None], dtype=np.float32))
        mu = self.mu_head.forward(h)
        logvar = np.clip(self.logvar_head.forward(h), -LOGVAR_CLAMP, LOGVAR_CLAMP)
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(logvar))):
            raise TrainingError("encoder produced non-finite latent")
        return mu, logvar

    def encode(self, frame) -> LatentCode:
        """frame: DepthFrame (duck-typed: needs .x)."""
        mu, logvar = self.encode_batch(np.asarray(frame.x, dtype=np.float32)[None])
        return LatentCode(mu=mu[0], logvar=logvar[0])

    def decode_batch(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float32)
        if z.ndim != 2 or z.shape[1] != self.cfg.latent_dim:
            raise ShapeError(f"decode: expected (N, {self.cfg.latent_dim}), got {z.shape}")
        if not np.all(np.isfinite(z)):
            raise ShapeError("decode: non-finite latent")
        return self.decoder.forward(z)[:, 0]

    def decode(self, z: np.ndarray) -> np.ndarray:
        return self.decode_batch(np.asarray(z, dtype=np.float32)[None])[0]

    # -- training step -------------------------------------------------------
    def loss_and_grads(self, x, val_lam, eps):
        """One forward/backward pass over a batch.

        x:       (B, H, W) inputs (= reconstruction targets)
        val_lam: (B, H, W) product of validity mask and semantic weights
        eps:     (B, J) reparameterization noise
        Returns (total, recon_mean, kl_mean); gradients accumulate in layers.
        """
        dt = self.dtype
        b = x.shape[0]
        x = np.ascontiguousarray(x, dtype=dt)
        val_lam = np.asarray(val_lam, dtype=dt)
        eps = np.asarray(eps, dtype=dt)
        h = self.encoder.forward(x[:, None])
        mu = self.mu_head.forward(h)
        logvar_raw = self.logvar_head.forward(h)
        logvar = np.clip(logvar_raw, -LOGVAR_CLAMP, LOGVAR_CLAMP)
        z = sample_latent(mu, logvar, eps)
        x_rec = self.decoder.forward(z.astype(dt, copy=False))[:, 0]

        diff = x_rec - x
        recon_each = np.sum(diff * diff * val_lam, axis=(1, 2))
        kl_each = _kl_batch(mu.astype(np.float64), logvar.astype(np.float64))
        recon_mean = float(recon_each.mean())
        kl_mean = float(kl_each.mean())
        total = recon_mean + self.cfg.beta_norm * kl_mean

        d_rec = (2.0 / b) * diff * val_lam
        dz = self.decoder.backward(d_rec[:, None].astype(dt, copy=False))
        dmu_z, dlogvar_z = sample_latent_backward(dz, logvar_raw, eps)
        scale = dt.type(self.cfg.beta_norm / b)
        dmu = dmu_z + scale * mu
        inside = (np.abs(logvar_raw) < LOGVAR_CLAMP).astype(dt)
        dlogvar = dlogvar_z + scale * dt.type(0.5) * (np.exp(logvar) - 1.0) * inside
        dh = self.mu_head.backward(dmu.astype(dt, copy=False))
        dh += self.logvar_head.backward(dlogvar.astype(dt, copy=False))
        self.encoder.backward(dh)
        return total, recon_mean, kl_mean

    # -- persistence ----------------------------------------------------------
    def save(self, path, extra_meta: dict | None = None) -> None:
        entries = {}
        for layer in self._all_layers():
            for key, arr in layer.params.items():
                entries[f"{layer.name}.{key}"] = Entry(layer.kind, layer.stride, arr)
        meta = {"kind": "sevae", "config": asdict(self.cfg)}
        if extra_meta:
            meta.update(extra_meta)
        save_checkpoint(path, entries, meta)

    @classmethod
    def load(cls, path) -> "SemanticVae":
        meta, entries = load_checkpoint(path)
        if meta.get("kind") != "sevae":
            raise TrainingError(f"{path}: not an autoencoder checkpoint")
        raw = dict(meta["config"])
        raw["enc_channels"] = tuple(raw["enc_channels"])
        model = cls(VaeConfig(**raw), seed=0)
        own = {}
        for layer in model._all_layers():
            for key, arr in layer.params.items():
                own[f"{layer.name}.{key}"] = arr
        for name, arr in own.items():
            if name not in entries:
                raise TrainingError(f"{path}: missing parameter {name!r}")
            stored = entries[name].array
            if stored.shape != arr.shape:
                raise TrainingError(f"{path}: shape mismatch for {name!r}")
            arr[...] = stored
        return model


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_recon: float
    val_kl: float


def train_vae(frames, cfg: VaeConfig, seed: int, epochs: int = 40, lr: float = 1e-4,
              batch_size: int = 32, vanilla: bool = False, split_ratio: float = 0.8,
              out_dir=None, log_every: int = 0) -> tuple[SemanticVae, list[EpochStats]]:
    """Train on a frame set (duck-typed: .x (N,H,W), .valid, .seg arrays).

    `vanilla` forces the semantic weight to 1 everywhere.  The run is fully
    determined by (cfg, seed): identical inputs give bit-identical
    checkpoints.
    """
    x = np.asarray(frames.x, dtype=np.float32)
    valid = np.asarray(frames.valid)
    seg = np.asarray(frames.seg)
    n = x.shape[0]
    if n == 0:
        raise TrainingError("empty dataset")
    if x.shape[1:] != (cfg.height, cfg.width):
        raise ShapeError(f"frames are {x.shape[1:]}, config wants {(cfg.height, cfg.width)}")

    rng = np.random.default_rng(seed)
    model = SemanticVae(cfg, seed=int(rng.integers(2**31)))

    # per-frame validity*weight product, fixed for the whole run
    val_lam = np.empty_like(x)
    for i in range(n):
        lam = np.ones_like(x[i]) if vanilla else semantic_weight_mask(
            seg[i], cfg.w_const, cfg.nu_min, cfg.p_min)
        val_lam[i] = (valid[i] > 0).astype(np.float32) * lam

    order = rng.permutation(n)
    n_train = int(round(split_ratio * n)) if n > 1 else 1
    train_idx, val_idx = order[:n_train], order[n_train:]
    if len(val_idx) == 0:
        val_idx = train_idx[:1]

    state = AdamState(lr=lr)
    history: list[EpochStats] = []
    j = cfg.latent_dim

    def validation_stats():
        recon_sum, kl_sum = 0.0, 0.0
        for lo in range(0, len(val_idx), batch_size):
            idx = val_idx[lo : lo + batch_size]
            mu, logvar = model.encode_batch(x[idx])
            x_rec = model.decode_batch(mu)
            diff = (x_rec - x[idx]).astype(np.float64)
            recon_sum += float(np.sum(diff * diff * val_lam[idx]))
            kl_sum += float(_kl_batch(mu.astype(np.float64), logvar.astype(np.float64)).sum())
        m = len(val_idx)
        return recon_sum / m, kl_sum / m

    for epoch in range(1, epochs + 1):
        perm = rng.permutation(len(train_idx))
        epoch_loss, batches = 0.0, 0
        for lo in range(0, len(train_idx), batch_size):
            idx = train_idx[perm[lo : lo + batch_size]]
            eps = rng.standard_normal((len(idx), j)).astype(np.float32)
            model.zero_grad()
            loss, _, _ = model.loss_and_grads(x[idx], val_lam[idx], eps)
            if not np.isfinite(loss):
                raise TrainingError(f"training diverged (non-finite loss at epoch {epoch})")
            adam_step(model.params(), model.grads(), state)
            epoch_loss += loss
            batches += 1
        val_recon, val_kl = validation_stats()
        stats = EpochStats(epoch, epoch_loss / batches,
                           val_recon + cfg.beta_norm * val_kl, val_recon, val_kl)
        history.append(stats)
        if log_every and epoch % log_every == 0:
            print(f"[vae] epoch {epoch:3d}  train {stats.train_loss:10.3f}  "
                  f"val {stats.val_loss:10.3f} (recon {val_recon:.3f}, kl {val_kl:.3f})")

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        name = "vanilla_vae" if vanilla else "sevae"
        model.save(out_dir / f"{name}.ckpt", extra_meta={
            "semantic_weighting": not vanilla, "seed": seed, "epochs": epochs, "lr": lr,
        })
        with open(out_dir / f"{name}_losses.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_loss", "val_recon", "val_kl"])
            for s in history:
                writer.writerow([s.epoch, f"{s.train_loss:.9g}", f"{s.val_loss:.9g}",
                                 f"{s.val_recon:.9g}", f"{s.val_kl:.9g}"])
    return model, history
