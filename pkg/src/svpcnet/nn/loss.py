"""Penalised training loss: MSE + upper-bound penalty + symmetry penalty."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class LossParts(NamedTuple):
    total: float
    mse: float
    ineq: float
    sym: float


def loss(preds, targets, phi_values, orbit_preds=None, lam_ineq=0.0, lam_sym=0.0) -> LossParts:
    """Loss components for one batch.

    ``orbit_preds`` has shape ``(n, #Pi_d - 1)`` and holds the predictions at
    the non-identity images of each input. The MSE and symmetry terms are
    means over the batch; the upper-bound penalty is a plain sum.
    """
    preds = np.asarray(preds, dtype=float)
    mse = float(np.mean((preds - np.asarray(targets)) ** 2))
    with np.errstate(invalid="ignore"):
        excess = np.maximum(preds - np.asarray(phi_values), 0.0)
    ineq = float(np.sum(excess**2))
    sym = 0.0
    if orbit_preds is not None and np.size(orbit_preds):
        sym = float(np.mean((preds[:, None] - np.asarray(orbit_preds)) ** 2))
    return LossParts(mse + lam_ineq * ineq + lam_sym * sym, mse, ineq, sym)


def loss_grad(preds, targets, phi_values, orbit_preds=None, lam_ineq=0.0, lam_sym=0.0):
    """Derivatives of the total loss w.r.t. ``preds`` and ``orbit_preds``."""
    preds = np.asarray(preds, dtype=float)
    n = preds.shape[0]
    with np.errstate(invalid="ignore"):
        excess = np.maximum(preds - np.asarray(phi_values), 0.0)
    dpred = 2.0 * (preds - np.asarray(targets)) / n + lam_ineq * 2.0 * excess
    dorbit = None
    if orbit_preds is not None and np.size(orbit_preds):
        orbit_preds = np.asarray(orbit_preds)
        diff = preds[:, None] - orbit_preds
        scale = 2.0 * lam_sym / diff.size
        dpred = dpred + scale * diff.sum(axis=1)
        dorbit = -scale * diff
    return dpred, dorbit
