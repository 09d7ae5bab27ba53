"""Mini-batch training with ADAMAX, weight projection and early stopping."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..ssv import dim_from_minors, minors, symmetry_group
from .loss import LossParts, loss, loss_grad
from .networks import Architecture, NetworkParams, backward, forward, init_params, project_weights
from .optim import Adamax

log = logging.getLogger(__name__)


class EmptyPartitionError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 128
    patience: int = 10
    lam_ineq: float = 1.5
    lam_sym: float = 1.0
    max_epochs: int = 2000
    seed: int = 0
    ensemble_size: int = 1
    min_improvement: float = 1e-12

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.lam_ineq < 0 or self.lam_sym < 0:
            raise ValueError("penalty weights must be nonnegative")
        if self.patience < 1 or self.batch_size < 1 or self.max_epochs < 1 or self.ensemble_size < 1:
            raise ValueError("patience, batch size, epochs and ensemble size must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainHistory:
    records: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = np.inf
    stopped_early: bool = False

    @property
    def epochs(self) -> int:
        return len(self.records)

    @property
    def final(self) -> dict:
        return self.records[-1]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainHistory":
        return cls(**d)

    def write_csv(self, path) -> None:
        keys = list(self.records[0]) if self.records else ["epoch"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(keys)
            for r in self.records:
                w.writerow([r[k] if isinstance(r[k], int) else f"{r[k]:.17g}" for k in keys])


@dataclass
class _Arrays:
    mhat: np.ndarray
    zeta: np.ndarray | None
    target: np.ndarray
    phi: np.ndarray
    orbit_mhat: np.ndarray  # (#Pi_d - 1, n, k)

    @classmethod
    def from_partition(cls, part, arch: Architecture) -> "_Arrays":
        mhat = np.asarray(part.mhat, dtype=float)
        if mhat.shape[0] == 0:
            raise EmptyPartitionError("training needs nonempty training and validation partitions")
        d = dim_from_minors(mhat.shape[1])
        nu = mhat[:, :d]
        others = [g for g in symmetry_group(d) if not g.is_identity]
        orbit_mhat = np.stack([minors(g(nu)) for g in others])
        zeta = np.asarray(part.zeta, dtype=float) if arch.n_params else None
        return cls(mhat, zeta, np.asarray(part.target, float), np.asarray(part.phi, float), orbit_mhat)

    def __len__(self):
        return self.mhat.shape[0]

    def batch(self, idx) -> "_Arrays":
        return _Arrays(
            self.mhat[idx],
            None if self.zeta is None else self.zeta[idx],
            self.target[idx],
            self.phi[idx],
            self.orbit_mhat[:, idx],
        )


def _stacked_forward(params, b: _Arrays, cache=False):
    """Forward at the inputs and all their Pi_d images in one pass."""
    n, g = len(b), b.orbit_mhat.shape[0]
    m = np.concatenate([b.mhat[None], b.orbit_mhat]).reshape(-1, b.mhat.shape[1])
    z = None if b.zeta is None else np.tile(b.zeta, (g + 1, 1))
    res = forward(params, m, z, cache=cache)
    out = res[0] if cache else res
    vals = out.reshape(g + 1, n)
    return (vals[0], vals[1:].T, res[1]) if cache else (vals[0], vals[1:].T)


def batch_loss_and_grad(params: NetworkParams, b: _Arrays, lam_ineq: float, lam_sym: float):
    pred, orbit, tape = _stacked_forward(params, b, cache=True)
    parts = loss(pred, b.target, b.phi, orbit, lam_ineq, lam_sym)
    dpred, dorbit = loss_grad(pred, b.target, b.phi, orbit, lam_ineq, lam_sym)
    dout = np.concatenate([dpred, dorbit.T.ravel()])
    return parts, backward(params, tape, dout)


def evaluate_loss(params, data: _Arrays, cfg: TrainConfig) -> LossParts:
    """Mean of per-batch losses over one unshuffled pass."""
    pred, orbit = _stacked_forward(params, data)
    parts = []
    for s in range(0, len(data), cfg.batch_size):
        sl = slice(s, s + cfg.batch_size)
        parts.append(loss(pred[sl], data.target[sl], data.phi[sl], orbit[sl], cfg.lam_ineq, cfg.lam_sym))
    return LossParts(*np.mean(np.array(parts), axis=0).tolist())


def train(dataset, arch: Architecture, cfg: TrainConfig, *, seed: int | None = None, on_epoch=None):
    """Train one network realisation.

    ``dataset`` exposes ``train`` and ``validation`` partitions with
    ``mhat``, ``zeta``, ``target`` and ``phi`` arrays. Returns the parameters
    after the last epoch and the per-epoch history.
    """
    seed = cfg.seed if seed is None else seed
    tr = _Arrays.from_partition(dataset.train, arch)
    va = _Arrays.from_partition(dataset.validation, arch)
    params = init_params(arch, seed)
    opt = Adamax(lr=cfg.lr)
    rng = np.random.default_rng([seed, 1])
    hist = TrainHistory()
    wait = 0
    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(len(tr))
        for s in range(0, len(tr), cfg.batch_size):
            _, grads = batch_loss_and_grad(params, tr.batch(perm[s : s + cfg.batch_size]), cfg.lam_ineq, cfg.lam_sym)
            params = project_weights(opt.step(params, grads))
        t, v = evaluate_loss(params, tr, cfg), evaluate_loss(params, va, cfg)
        rec = {"epoch": epoch}
        rec.update({f"train_{k}": x for k, x in t._asdict().items()})
        rec.update({f"val_{k}": x for k, x in v._asdict().items()})
        hist.records.append(rec)
        if on_epoch is not None:
            on_epoch(epoch, params)
        if v.total < hist.best_val - cfg.min_improvement:
            hist.best_val, hist.best_epoch, wait = v.total, epoch, 0
        else:
            wait += 1
        if epoch % 10 == 0 or epoch == 1:
            log.info("epoch %d: train %.4e  val %.4e", epoch, t.total, v.total)
        if wait >= cfg.patience:
            hist.stopped_early = True
            log.info("early stop at epoch %d (best %d)", epoch, hist.best_epoch)
            break
    return params, hist


def train_ensemble(dataset, arch: Architecture, cfg: TrainConfig):
    """``cfg.ensemble_size`` realisations with seeds ``cfg.seed + r``."""
    return [train(dataset, arch, cfg, seed=cfg.seed + r) for r in range(cfg.ensemble_size)]
