"""Pointwise polyconvex envelopes by linear programming over a lifted lattice.

At a query ``nu`` the envelope is approximated by

    min sum_i xi_i phi(nu_i)   s.t.  xi >= 0, sum xi = 1, sum xi m(nu_i) = m(nu)

where the ``nu_i`` run over the lattice points. Optimal basic solutions use
at most ``k_d + 1`` lattice points; their weights are the volume fractions.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..ssv import minors
from .lattice import Lattice
from .simplex import INFEASIBLE, OPTIMAL, Tolerances, envelope_problem, solve

log = logging.getLogger(__name__)


class InadmissibleError(ValueError):
    """No lattice point has a finite density value."""


@dataclass
class LiftedColumns:
    columns: np.ndarray  # (N, k_d) minors of admissible lattice points
    costs: np.ndarray  # (N,) density values
    lattice_index: np.ndarray  # (N,) positions in the lattice point list
    dropped: np.ndarray  # lattice positions with infinite density

    def __len__(self) -> int:
        return self.costs.shape[0]


@dataclass
class EnvelopePoint:
    query: np.ndarray
    value: float
    support: list[tuple[int, float]]
    status: str


@dataclass
class EnvelopeField:
    queries: np.ndarray
    values: np.ndarray
    status: list[str]
    support: list[list[tuple[int, float]]] = field(repr=False, default_factory=list)
    grid_shape: tuple[int, ...] | None = None
    provenance: dict = field(default_factory=dict)

    @property
    def n_infeasible(self) -> int:
        return sum(s != OPTIMAL for s in self.status)


def lift_and_evaluate(lat: Lattice, model, zeta=()) -> LiftedColumns:
    """Minors and density values at every lattice point with finite density."""
    costs = np.asarray(model.evaluate(lat.points, zeta), dtype=float)
    ok = np.isfinite(costs)
    if not ok.any():
        raise InadmissibleError("density is infinite on every lattice point")
    idx = np.flatnonzero(ok)
    return LiftedColumns(minors(lat.points[idx]), costs[idx], idx, np.flatnonzero(~ok))


def envelope_point(lifted: LiftedColumns, query, tol: Tolerances = Tolerances()) -> EnvelopePoint:
    query = np.asarray(query, dtype=float)
    res = solve(envelope_problem(lifted.columns, lifted.costs, minors(query)), tol)
    if res.status != OPTIMAL:
        return EnvelopePoint(query, np.nan, [], INFEASIBLE)
    support = [(int(lifted.lattice_index[j]), float(v)) for j, v in zip(res.support, res.values)]
    return EnvelopePoint(query, res.objective, support, OPTIMAL)


def _solve_chunk(args):
    lifted, queries, tol = args
    return [envelope_point(lifted, q, tol) for q in queries]


def polyconvexify(
    model,
    zeta,
    lat: Lattice,
    queries=None,
    *,
    tol: Tolerances = Tolerances(),
    threads: int = 1,
    grid_shape=None,
) -> EnvelopeField:
    """Envelope values at ``queries`` (default: every lattice point).

    Solves are independent; with ``threads > 1`` they are farmed out to worker
    processes in contiguous chunks and reassembled in query order, so the
    result does not depend on scheduling.
    """
    if queries is None:
        queries, grid_shape = lat.points, lat.shape
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    lifted = lift_and_evaluate(lat, model, zeta)
    if threads > 1 and len(queries) > 1:
        chunks = np.array_split(np.arange(len(queries)), threads)
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = pool.map(_solve_chunk, [(lifted, queries[c], tol) for c in chunks])
            points = [p for part in parts for p in part]
    else:
        points = []
        for i, q in enumerate(queries):
            points.append(envelope_point(lifted, q, tol))
            if (i + 1) % 500 == 0:
                log.info("solved %d/%d envelope queries", i + 1, len(queries))
    prov = {
        "model": model.to_dict() if hasattr(model, "to_dict") else repr(model),
        "zeta": [float(z) for z in np.atleast_1d(np.asarray(zeta, dtype=float))],
        "lattice_shape": list(lat.shape),
        "n_columns": len(lifted),
        "n_dropped": int(lifted.dropped.size),
        "tolerances": asdict(tol),
    }
    return EnvelopeField(
        queries=queries,
        values=np.array([p.value for p in points]),
        status=[p.status for p in points],
        support=[p.support for p in points],
        grid_shape=tuple(grid_shape) if grid_shape is not None else None,
        provenance=prov,
    )


def write_field(fld: EnvelopeField, path, extra_provenance: dict | None = None) -> Path:
    """CSV ``nu_1..nu_d,value,status`` plus a ``.json`` provenance sidecar."""
    path = Path(path)
    d = fld.queries.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"nu_{i + 1}" for i in range(d)] + ["value", "status"])
        for q, v, s in zip(fld.queries, fld.values, fld.status):
            w.writerow([f"{x:.17g}" for x in q] + [f"{v:.17g}", s])
    prov = dict(fld.provenance)
    prov["grid_shape"] = list(fld.grid_shape) if fld.grid_shape else None
    prov.update(extra_provenance or {})
    path.with_suffix(".json").write_text(json.dumps(prov, indent=2, sort_keys=True) + "\n")
    return path


def read_field(path) -> EnvelopeField:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = len(header) - 2
    if header != [f"nu_{i + 1}" for i in range(d)] + ["value", "status"]:
        raise ValueError(f"{path}: unexpected envelope header {header}")
    queries = np.array([[float(x) for x in r[:d]] for r in body]).reshape(-1, d)
    values = np.array([float(r[d]) for r in body])
    status = [r[d + 1] for r in body]
    side = path.with_suffix(".json")
    prov = json.loads(side.read_text()) if side.exists() else {}
    shape = prov.get("grid_shape")
    return EnvelopeField(queries, values, status, [], tuple(shape) if shape else None, prov)
