"""Collision prediction network.

Dense embeddings of the perception input (latent code, or raw depth through
a small conv stack in the end-to-end variant) and of the partial state
initialize a single gated recurrent cell; each step consumes one embedded
action and emits a collision logit through a dense head.  predict() returns
sigmoid scores in [0, 1].

The end-to-end variant exists as the comparison baseline: its conv encoder
is trained jointly from collision labels only, with no reconstruction loss,
no semantic weighting, and clean simulated frames only.
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
    Dense,
    Entry,
    Flatten,
    GRUCell,
    Sequential,
    adam_step,
    conv_out_hw,
    load_checkpoint,
    save_checkpoint,
    sigmoid,
)

MODULAR = "modular"
END_TO_END = "end-to-end"


@dataclass(frozen=True)
class CpnConfig:
    variant: str = MODULAR
    latent_dim: int = 32          # J (modular input width)
    state_dim: int = 6
    action_dim: int = 4
    horizon: int = 10             # T
    hidden: int = 64
    perception_embed: int = 64
    state_embed: int = 16
    action_embed: int = 16
    image_hw: tuple[int, int] = (60, 80)      # end-to-end input resolution
    e2e_channels: tuple[int, ...] = (4, 8, 16)
    lrelu_slope: float = 0.1

    def __post_init__(self):
        if self.horizon < 1:
            raise ShapeError("horizon must be >= 1")
        if self.variant not in (MODULAR, END_TO_END):
            raise ShapeError(f"unknown variant {self.variant!r}")


class CollisionPredictor:
    """Scores action sequences; see score_library for the batched form."""

    def __init__(self, cfg: CpnConfig, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        sl = cfg.lrelu_slope
        if cfg.variant == MODULAR:
            self.perception = Sequential([
                Dense(cfg.latent_dim, cfg.perception_embed, rng=rng, name="pe", dtype=dtype),
                Activation("lrelu", sl, name="pea", dtype=dtype),
            ])
        else:
            layers, in_ch, hw = [], 1, cfg.image_hw
            for i, ch in enumerate(cfg.e2e_channels):
                layers.append(Conv2d(in_ch, ch, (3, 3), 2, rng=rng, name=f"pc{i}", dtype=dtype))
                layers.append(Activation("lrelu", sl, name=f"pc{i}a", dtype=dtype))
                hw = conv_out_hw(hw, (3, 3), 2, 1)
                in_ch = ch
            layers.append(Flatten(name="pf", dtype=dtype))
            layers.append(Dense(in_ch * hw[0] * hw[1], cfg.perception_embed, rng=rng,
                                name="pe", dtype=dtype))
            layers.append(Activation("lrelu", sl, name="pea", dtype=dtype))
            self.perception = Sequential(layers)
        self.state_emb = Sequential([
            Dense(cfg.state_dim, cfg.state_embed, rng=rng, name="se", dtype=dtype),
            Activation("lrelu", sl, name="sea", dtype=dtype),
        ])
        self.h0_net = Sequential([
            Dense(cfg.perception_embed + cfg.state_embed, cfg.hidden, rng=rng, name="h0", dtype=dtype),
            Activation("tanh", name="h0a", dtype=dtype),
        ])
        self.action_emb = Sequential([
            Dense(cfg.action_dim, cfg.action_embed, rng=rng, name="ae", dtype=dtype),
            Activation("lrelu", sl, name="aea", dtype=dtype),
        ])
        self.gru = GRUCell(cfg.action_embed, cfg.hidden, rng=rng, name="gru", dtype=dtype)
        self.head = Dense(cfg.hidden, 1, rng=rng, name="head", dtype=dtype)

    def _nets(self):
        return [self.perception, self.state_emb, self.h0_net, self.action_emb]

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for net in self._nets():
            out.update(net.params())
        for key, val in self.gru.params.items():
            out[f"gru.{key}"] = val
        for key, val in self.head.params.items():
            out[f"head.{key}"] = val
        return out

    def grads(self) -> dict[str, np.ndarray]:
        out = {}
        for net in self._nets():
            out.update(net.grads())
        for key, val in self.gru.grads.items():
            out[f"gru.{key}"] = val
        for key, val in self.head.grads.items():
            out[f"head.{key}"] = val
        return out

    def zero_grad(self):
        for net in self._nets():
            net.zero_grad()
        self.gru.zero_grad()
        self.head.zero_grad()

    # -- forward/backward core ------------------------------------------------
    def _perception_input(self, perception):
        arr = np.asarray(perception, dtype=np.float32)
        if self.cfg.variant == MODULAR:
            if arr.ndim == 1:
                arr = arr[None]
            if arr.shape[-1] != self.cfg.latent_dim:
                raise ShapeError(f"latent width {arr.shape[-1]}, expected {self.cfg.latent_dim}")
        else:
            if arr.ndim == 2:
                arr = arr[None]
            if arr.shape[-2:] != tuple(self.cfg.image_hw):
                raise ShapeError(f"frame is {arr.shape[-2:]}, expected {tuple(self.cfg.image_hw)}")
            arr = arr[:, None]  # (N, 1, H, W)
        return arr

    def _forward_logits(self, pe, se, actions):
        """pe: (B, PE), se: (B, SE), actions: (B, T, 4) -> logits (B, T)."""
        b, t, _ = actions.shape
        h = self.h0_net.forward(np.concatenate([pe, se], axis=1))
        ae = self.action_emb.forward(
            np.ascontiguousarray(actions.reshape(b * t, self.cfg.action_dim), dtype=pe.dtype)
        ).reshape(b, t, self.cfg.action_embed)
        self.gru.reset()
        hs = np.empty((b, t, self.cfg.hidden), dtype=pe.dtype)
        for i in range(t):
            h = self.gru.forward(ae[:, i], h)
            hs[:, i] = h
        logits = self.head.forward(hs.reshape(b * t, self.cfg.hidden)).reshape(b, t)
        return logits

    def _backward_logits(self, dlogits):
        b, t = dlogits.shape
        dhs = self.head.backward(dlogits.reshape(b * t, 1)).reshape(b, t, self.cfg.hidden)
        carry = np.zeros((b, self.cfg.hidden), dtype=dlogits.dtype)
        dae = np.empty((b, t, self.cfg.action_embed), dtype=dlogits.dtype)
        for i in range(t - 1, -1, -1):
            dae[:, i], carry = self.gru.backward(dhs[:, i] + carry)
        self.action_emb.backward(dae.reshape(b * t, self.cfg.action_embed))
        dh0 = self.h0_net.backward(carry)
        dpe = dh0[:, : self.cfg.perception_embed]
        dse = dh0[:, self.cfg.perception_embed :]
        self.state_emb.backward(dse)
        self.perception.backward(dpe)

    # -- inference --------------------------------------------------------------
    def predict(self, perception, state, actions) -> np.ndarray:
        """Score one action sequence; returns (T,) collision scores in [0, 1]."""
        scores = self.score_library(perception, np.asarray(state, np.float32)[None],
                                    np.asarray(actions, np.float32)[None])
        return scores[0, 0]

    def score_library(self, perception, states, actions) -> np.ndarray:
        """states: (S, 6), actions: (M, T, 4) -> scores (S, M, T).

        The perception embedding is computed once and shared across all
        state/sequence combinations.
        """
        states = np.asarray(states, dtype=np.float32)
        actions = np.asarray(actions, dtype=np.float32)
        if states.ndim != 2 or states.shape[1] != self.cfg.state_dim:
            raise ShapeError(f"states must be (S, {self.cfg.state_dim}), got {states.shape}")
        if actions.ndim != 3 or actions.shape[2] != self.cfg.action_dim:
            raise ShapeError(f"actions must be (M, T, {self.cfg.action_dim}), got {actions.shape}")
        s, m = states.shape[0], actions.shape[0]
        pe = self.perception.forward(self._perception_input(perception))
        if pe.shape[0] != 1:
            raise ShapeError("score_library expects a single perception input")
        se = self.state_emb.forward(states)
        pe_rows = np.repeat(pe, s * m, axis=0)
        se_rows = np.repeat(se, m, axis=0)
        act_rows = np.tile(actions, (s, 1, 1))
        logits = self._forward_logits(pe_rows, se_rows, act_rows)
        scores = sigmoid(logits).reshape(s, m, actions.shape[1])
        if not np.all(np.isfinite(scores)):
            raise TrainingError("collision scores non-finite")
        return scores

    # -- training ------------------------------------------------------------
    def loss_and_grads(self, perception_batch, states, actions, labels, pos_weight=1.0):
        """Weighted per-step binary cross-entropy on logits; returns the
        scalar loss, gradients accumulate in the layers."""
        pe = self.perception.forward(self._perception_input(perception_batch))
        se = self.state_emb.forward(states)
        logits = self._forward_logits(pe, se, actions)
        y = labels.astype(logits.dtype)
        w = np.where(y > 0, pos_weight, 1.0).astype(logits.dtype)
        # stable bce-with-logits
        bce = np.maximum(logits, 0) - logits * y + np.log1p(np.exp(-np.abs(logits)))
        denom = float(logits.size)
        loss = float(np.sum(w * bce) / denom)
        dlogits = w * (sigmoid(logits) - y) / denom
        self._backward_logits(dlogits.astype(logits.dtype))
        return loss

    # -- persistence -----------------------------------------------------------
    def _layers(self):
        out = []
        for net in self._nets():
            out.extend(net.layers)
        out.extend([self.gru, self.head])
        return out

    def save(self, path, extra_meta: dict | None = None) -> None:
        entries = {}
        for layer in self._layers():
            for key, arr in layer.params.items():
                entries[f"{layer.name}.{key}"] = Entry(layer.kind, layer.stride, arr)
        meta = {"kind": "cpn", "config": asdict(self.cfg)}
        if extra_meta:
            meta.update(extra_meta)
        save_checkpoint(path, entries, meta)

    @classmethod
    def load(cls, path) -> "CollisionPredictor":
        meta, entries = load_checkpoint(path)
        if meta.get("kind") != "cpn":
            raise TrainingError(f"{path}: not a collision-predictor checkpoint")
        raw = dict(meta["config"])
        raw["image_hw"] = tuple(raw["image_hw"])
        raw["e2e_channels"] = tuple(raw["e2e_channels"])
        model = cls(CpnConfig(**raw), seed=0)
        for layer in model._layers():
            for key, arr in layer.params.items():
                name = f"{layer.name}.{key}"
                if name not in entries:
                    raise TrainingError(f"{path}: missing parameter {name!r}")
                if entries[name].array.shape != arr.shape:
                    raise TrainingError(f"{path}: shape mismatch for {name!r}")
                arr[...] = entries[name].array
        return model


# ---------------------------------------------------------------------------
# Metrics and training loop
# ---------------------------------------------------------------------------

def binary_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Rank-based AUC (Mann-Whitney U) with average ranks for ties."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel() > 0
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class CpnEpochStats:
    epoch: int
    train_bce: float
    val_bce: float
    val_auc: float
    val_acc: float


def _dataset_views(ds, variant):
    """(perception_array, states, actions, labels) for either dataset kind."""
    if variant == MODULAR:
        if not hasattr(ds, "mu"):
            raise TrainingError("modular training needs a latent dataset (d')")
        return ds.mu, ds.states, ds.actions, ds.labels
    if not hasattr(ds, "frames"):
        raise TrainingError("end-to-end training needs a raw-frame dataset (d)")
    return ds.frames.x, ds.states, ds.actions, ds.labels


def train_cpn(ds, cfg: CpnConfig, seed: int, epochs: int = 30, lr: float = 1e-3,
              batch_size: int = 128, split_ratio: float = 0.8, pos_weight_cap: float = 10.0,
              out_dir=None, log_every: int = 0) -> tuple[CollisionPredictor, list[CpnEpochStats]]:
    """Train a predictor on d' (modular) or d (end-to-end) datapoints."""
    perception, states, actions, labels = _dataset_views(ds, cfg.variant)
    n = len(states)
    if n == 0:
        raise TrainingError("empty dataset")
    if actions.shape[1] != cfg.horizon:
        raise ShapeError(f"dataset horizon {actions.shape[1]} != config horizon {cfg.horizon}")

    rng = np.random.default_rng(seed)
    model = CollisionPredictor(cfg, seed=int(rng.integers(2**31)))
    order = rng.permutation(n)
    n_train = max(1, int(round(split_ratio * n)))
    tr, va = order[:n_train], order[n_train:]
    if len(va) == 0:
        va = tr[:1]

    y_train = labels[tr]
    n_pos = max(1, int((y_train > 0).sum()))
    n_neg = y_train.size - n_pos
    pos_weight = float(min(pos_weight_cap, max(1.0, n_neg / n_pos)))

    state = AdamState(lr=lr)
    history: list[CpnEpochStats] = []

    states_f = states.astype(np.float32)
    actions_f = actions.astype(np.float32)

    def batch_perception(idx):
        return perception[idx]

    def evaluate():
        bce_sum, count = 0.0, 0
        scores_all, labels_all = [], []
        for lo in range(0, len(va), batch_size):
            idx = va[lo : lo + batch_size]
            pe = model.perception.forward(model._perception_input(batch_perception(idx)))
            se = model.state_emb.forward(states_f[idx])
            logits = model._forward_logits(pe, se, actions_f[idx])
            y = labels[idx].astype(np.float64)
            l64 = logits.astype(np.float64)
            bce = np.maximum(l64, 0) - l64 * y + np.log1p(np.exp(-np.abs(l64)))
            bce_sum += float(bce.sum())
            count += logits.size
            scores_all.append(sigmoid(l64))
            labels_all.append(y)
        scores = np.concatenate([s.ravel() for s in scores_all])
        ys = np.concatenate([s.ravel() for s in labels_all])
        acc = float(((scores >= 0.5) == (ys > 0)).mean())
        return bce_sum / count, binary_auc(scores, ys), acc

    for epoch in range(1, epochs + 1):
        perm = rng.permutation(len(tr))
        loss_sum, batches = 0.0, 0
        for lo in range(0, len(tr), batch_size):
            idx = tr[perm[lo : lo + batch_size]]
            model.zero_grad()
            loss = model.loss_and_grads(batch_perception(idx), states_f[idx],
                                        actions_f[idx], labels[idx], pos_weight)
            if not np.isfinite(loss):
                raise TrainingError(f"training diverged (non-finite loss at epoch {epoch})")
            adam_step(model.params(), model.grads(), state)
            loss_sum += loss
            batches += 1
        val_bce, val_auc, val_acc = evaluate()
        stats = CpnEpochStats(epoch, loss_sum / batches, val_bce, val_auc, val_acc)
        history.append(stats)
        if log_every and epoch % log_every == 0:
            print(f"[cpn:{cfg.variant}] epoch {epoch:3d}  train {stats.train_bce:.4f}  "
                  f"val {val_bce:.4f}  auc {val_auc:.3f}  acc {val_acc:.3f}")

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = "cpn_modular" if cfg.variant == MODULAR else "cpn_end_to_end"
        model.save(out_dir / f"{stem}.ckpt",
                   extra_meta={"seed": seed, "epochs": epochs, "lr": lr,
                               "pos_weight": pos_weight})
        with open(out_dir / f"{stem}_metrics.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "bce", "auc", "acc"])
            for s in history:
                writer.writerow([s.epoch, f"{s.val_bce:.9g}", f"{s.val_auc:.9g}", f"{s.val_acc:.9g}"])
    return model, history
