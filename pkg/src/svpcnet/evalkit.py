"""Error metrics, cross-sections and parameter sweeps.

Metric convention (every report carries it in ``convention``)::

    mean_error          = mean|pred - ref| / mean|ref|
    rel_quadratic_error = ||pred - ref||_2 / ||ref||_2
    rel_max_error       = max|pred - ref| / max|ref|

so a uniform 2% offset on a constant reference reads 0.02 in all three.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .energies import EnergyModel
from .lp.envelope import EnvelopeField
from .nn.networks import NetworkParams, ensemble_predict, predict, symmetrize_prediction

METRICS = ("mean_error", "rel_quadratic_error", "rel_max_error")
CONVENTION = {
    "mean_error": "mean|pred-ref| / mean|ref|",
    "rel_quadratic_error": "||pred-ref||_2 / ||ref||_2",
    "rel_max_error": "max|pred-ref| / max|ref|",
}
AXES = {"(t,0)": "axis", "t0": "axis", "(t,t)": "diagonal", "tt": "diagonal"}


class MetricError(ValueError):
    pass


class MissingReferenceError(KeyError):
    pass


@dataclass
class ErrorReport:
    """The three error measures, averaged over realisations when there are several."""

    mean_error: float
    rel_quadratic_error: float
    rel_max_error: float
    std: dict = field(default_factory=lambda: dict.fromkeys(METRICS, 0.0))
    realizations: list[dict] = field(default_factory=list)
    grid: dict = field(default_factory=dict)
    zeta: tuple[float, ...] = ()
    convention: dict = field(default_factory=lambda: dict(CONVENTION))

    def as_row(self) -> dict:
        row = {f"zeta_{i + 1}": z for i, z in enumerate(self.zeta)}
        for m in METRICS:
            row[m] = getattr(self, m)
            row[f"{m}_std"] = self.std[m]
        row["n_realizations"] = max(len(self.realizations), 1)
        return row

    def to_dict(self) -> dict:
        d = asdict(self)
        d["zeta"] = list(self.zeta)
        return d


def _metrics(pred, ref) -> dict:
    diff = np.abs(pred - ref)
    aref = np.abs(ref)
    return {
        "mean_error": float(diff.mean() / aref.mean()),
        "rel_quadratic_error": float(np.linalg.norm(diff) / np.linalg.norm(ref)),
        "rel_max_error": float(diff.max() / aref.max()),
    }


def _check(pred, ref):
    pred, ref = np.asarray(pred, dtype=float), np.asarray(ref, dtype=float)
    if pred.shape != ref.shape:
        raise MetricError(f"shape mismatch: prediction {pred.shape} vs reference {ref.shape}")
    if ref.size == 0 or not np.any(ref):
        raise MetricError("metrics are undefined for an all-zero reference")
    if not (np.all(np.isfinite(ref)) and np.all(np.isfinite(pred))):
        raise MetricError("prediction and reference must be finite")
    if np.linalg.norm(ref) == 0:
        raise MetricError("reference norm underflows to zero")
    return pred, ref


def error_metrics(pred, ref, *, grid: dict | None = None, zeta=()) -> ErrorReport:
    pred, ref = _check(pred, ref)
    return ErrorReport(**_metrics(pred, ref), grid=dict(grid or {}), zeta=tuple(float(z) for z in zeta))


def ensemble_metrics(preds: Sequence, ref, *, grid: dict | None = None, zeta=()) -> ErrorReport:
    """Per-realisation metrics plus their mean and sample standard deviation."""
    per = [_metrics(*_check(p, ref)) for p in preds]
    if not per:
        raise MetricError("no realisations")
    table = np.array([[r[m] for m in METRICS] for r in per])
    std = table.std(axis=0, ddof=1) if len(per) > 1 else np.zeros(len(METRICS))
    mean = table.mean(axis=0)
    return ErrorReport(
        *mean.tolist(),
        std=dict(zip(METRICS, std.tolist())),
        realizations=per,
        grid=dict(grid or {}),
        zeta=tuple(float(z) for z in zeta),
    )


# --- evaluators ------------------------------------------------------------------
# Each maps (nu (n, d), zeta) -> (values (n,), std (n,) or None).


@dataclass
class AnalyticEvaluator:
    model: EnergyModel
    envelope: bool = True
    name: str = "analytic"

    def __call__(self, nu, zeta=()):
        f = self.model.envelope if self.envelope else self.model.evaluate
        return np.asarray(f(nu, zeta), dtype=float), None


@dataclass
class FieldEvaluator:
    """Nearest grid point lookup in a precomputed envelope field (no interpolation)."""

    field: EnvelopeField
    name: str = "svpc_lp"
    chunk: int = 2048

    def __call__(self, nu, zeta=()):
        nu = np.atleast_2d(np.asarray(nu, dtype=float))
        q = self.field.queries
        idx = np.empty(len(nu), dtype=np.int64)
        for s in range(0, len(nu), self.chunk):
            block = nu[s : s + self.chunk]
            dist = ((block[:, None, :] - q[None, :, :]) ** 2).sum(axis=-1)
            idx[s : s + self.chunk] = dist.argmin(axis=1)
        return self.field.values[idx], None


def _clamp_zeta(zeta, n, alpha_inf):
    z = np.asarray(zeta if zeta is not None else (), dtype=float)
    if z.size == 0:
        return None
    z = np.tile(z, (n, 1)) if z.ndim == 1 else z.copy()
    if alpha_inf is not None:
        z[:, 0] = np.minimum(z[:, 0], alpha_inf)
    return z


@dataclass
class NetworkEvaluator:
    """A frozen network. ``alpha_inf`` clamps a damage parameter before inference."""

    params: NetworkParams
    symmetrize: bool = False
    alpha_inf: float | None = None
    name: str = "network"

    def __call__(self, nu, zeta=()):
        nu = np.atleast_2d(np.asarray(nu, dtype=float))
        z = _clamp_zeta(zeta, len(nu), self.alpha_inf)
        f = symmetrize_prediction if self.symmetrize else predict
        return f(self.params, nu, z), None


@dataclass
class EnsembleEvaluator:
    params: Sequence[NetworkParams]
    symmetrize: bool = False
    alpha_inf: float | None = None
    name: str = "ensemble"

    def __call__(self, nu, zeta=()):
        nu = np.atleast_2d(np.asarray(nu, dtype=float))
        z = _clamp_zeta(zeta, len(nu), self.alpha_inf)
        return ensemble_predict(list(self.params), nu, z, symmetrize=self.symmetrize)

    def realizations(self, nu, zeta=()):
        nu = np.atleast_2d(np.asarray(nu, dtype=float))
        z = _clamp_zeta(zeta, len(nu), self.alpha_inf)
        f = symmetrize_prediction if self.symmetrize else predict
        return [f(p, nu, z) for p in self.params]


# --- grids, cross-sections and sweeps -------------------------------------------------


def uniform_grid(lo: float, hi: float, n: int, d: int = 2) -> np.ndarray:
    """Row-major tensor grid with ``n`` points per axis, shape ``(n**d, d)``."""
    g = np.linspace(lo, hi, n)
    return np.stack(np.meshgrid(*([g] * d), indexing="ij"), axis=-1).reshape(-1, d)


@dataclass
class CrossSection:
    axis: str
    t: np.ndarray
    value: np.ndarray
    std: np.ndarray | None = None
    name: str = ""

    def rows(self):
        cols = [self.t, self.value] + ([self.std] if self.std is not None else [])
        return list(zip(*(c.tolist() for c in cols)))

    @property
    def header(self) -> list[str]:
        return ["t", "value"] + (["std"] if self.std is not None else [])


def cross_section(evaluator: Callable, axis: str, t_range=(-1.05, 1.05), samples: int = 201, zeta=(),
                  d: int = 2) -> CrossSection:
    """Evaluate along ``(t, 0, ...)`` or ``(t, t, ...)``."""
    try:
        kind = AXES[axis]
    except KeyError:
        raise ValueError(f"axis must be one of {sorted(AXES)}, got {axis!r}") from None
    t = np.linspace(t_range[0], t_range[1], samples)
    direction = np.eye(d)[0] if kind == "axis" else np.ones(d)
    values, std = evaluator(t[:, None] * direction, zeta)
    label = "(t,0)" if kind == "axis" else "(t,t)"
    return CrossSection(label, t, np.asarray(values, float), None if std is None else np.asarray(std, float),
                        getattr(evaluator, "name", ""))


def _reference_values(reference, nu, zeta):
    if isinstance(reference, Mapping):
        key = tuple(float(z) for z in zeta)
        if key not in reference:
            raise MissingReferenceError(f"no reference values for zeta={list(key)}")
        ref = reference[key]
        return ref(nu, zeta)[0] if callable(ref) else np.asarray(ref, dtype=float)
    if reference is None:
        raise MissingReferenceError("no reference source given")
    out = reference(nu, zeta)
    return out[0] if isinstance(out, tuple) else out


def parameter_sweep(evaluator: Callable, reference, parameters, grid_nu, *, grid: dict | None = None) -> list[ErrorReport]:
    """One report per parameter vector.

    ``reference`` is an evaluator, or a mapping from parameter tuples to an
    evaluator or to reference values on ``grid_nu``.
    """
    reports = []
    for zeta in parameters:
        ref = _reference_values(reference, grid_nu, zeta)
        if isinstance(evaluator, EnsembleEvaluator):
            reports.append(ensemble_metrics(evaluator.realizations(grid_nu, zeta), ref, grid=grid, zeta=zeta))
        else:
            reports.append(error_metrics(evaluator(grid_nu, zeta)[0], ref, grid=grid, zeta=zeta))
    return reports


# --- output ------------------------------------------------------------------------


def write_cross_section(cs: CrossSection, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cs.header)
        for row in cs.rows():
            w.writerow([f"{x:.17g}" for x in row])
    return path


def write_reports(reports: Sequence[ErrorReport], path) -> Path:
    """CSV table of reports plus a JSON twin with realisations and convention."""
    path = Path(path)
    rows = [r.as_row() for r in reports]
    keys = list(rows[0]) if rows else list(METRICS)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for row in rows:
            w.writerow([row[k] if isinstance(row[k], int) else f"{row[k]:.17g}" for k in keys])
    doc = {"convention": CONVENTION, "reports": [r.to_dict() for r in reports]}
    path.with_suffix(".json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def plot_cross_sections(sections: Sequence[CrossSection], path, title: str = "") -> Path:
    """SVG line plot, one series per evaluator. Needs matplotlib."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    with matplotlib.rc_context({"svg.hashsalt": "svpcnet", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for cs in sections:
            ax.plot(cs.t, cs.value, label=cs.name or "value")
            if cs.std is not None:
                ax.fill_between(cs.t, cs.value - cs.std, cs.value + cs.std, alpha=0.25)
        ax.set_xlabel("t")
        ax.set_ylabel("value")
        if title:
            ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
