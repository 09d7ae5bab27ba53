"""Learning datasets of (minors, parameters, envelope value, density value) tuples."""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .energies import EnergyModel
from .lp.envelope import polyconvexify
from .lp.lattice import Lattice, LatticeSpec, build_lattice
from .ssv import canonical, minors, symmetry_group

log = logging.getLogger(__name__)

ENVELOPE_SLACK = 1e-9
SOURCES = ("analytic", "svpc_lp")


class GenerationError(ValueError):
    pass


class DatasetFormatError(ValueError):
    def __init__(self, path, line, column, message):
        super().__init__(f"{path}:{line}:{column}: {message}")
        self.path, self.line, self.column = path, line, column


@dataclass(frozen=True)
class ValidationPolicy:
    """``random_fraction``: hold out ``fraction`` of the generated tuples.

    ``held_out``: train on every generated tuple and validate on lattice
    tuples at the parameter vectors in ``values`` (kept out of the training
    parameter set). With ``samples_per_value > 0`` only that many lattice
    points, drawn with ``seed``, are used per held-out vector.
    """

    kind: str = "random_fraction"
    fraction: float = 0.3
    seed: int = 0
    values: tuple[tuple[float, ...], ...] = ()
    samples_per_value: int = 0

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(tuple(float(x) for x in v) for v in self.values))
        if self.kind == "random_fraction":
            if not 0.0 < self.fraction < 1.0:
                raise ValueError(f"validation fraction must lie in (0, 1), got {self.fraction}")
        elif self.kind == "held_out":
            if not self.values:
                raise ValueError("held_out validation needs parameter values")
        else:
            raise ValueError(f"unknown validation policy {self.kind!r}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "fraction": self.fraction,
            "seed": self.seed,
            "values": [list(v) for v in self.values],
            "samples_per_value": self.samples_per_value,
        }


@dataclass(frozen=True)
class DatasetSpec:
    model: EnergyModel
    lattice: LatticeSpec
    parameters: tuple[tuple[float, ...], ...] = ((),)
    augment: bool = False
    validation: ValidationPolicy = ValidationPolicy()
    source: str = "analytic"

    def __post_init__(self):
        object.__setattr__(self, "parameters", tuple(tuple(float(x) for x in z) for z in self.parameters))
        if self.source not in SOURCES:
            raise ValueError(f"unknown target source {self.source!r}")
        if self.source == "analytic" and not self.model.has_envelope:
            raise GenerationError(f"{self.model.kind} has no analytic envelope; use source 'svpc_lp'")
        for z in self.parameters:
            if len(z) != self.model.arity:
                raise GenerationError(f"parameter vector {z} does not match model arity {self.model.arity}")

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "lattice": self.lattice.to_dict(),
            "parameters": [list(z) for z in self.parameters],
            "augment": self.augment,
            "validation": self.validation.to_dict(),
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        return cls(
            model=EnergyModel.from_dict(d["model"]),
            lattice=LatticeSpec.from_dict(d["lattice"]),
            parameters=tuple(tuple(z) for z in d.get("parameters", [[]])),
            augment=d.get("augment", False),
            validation=ValidationPolicy(**d.get("validation", {})),
            source=d.get("source", "analytic"),
        )


@dataclass
class Dataset:
    mhat: np.ndarray
    zeta: np.ndarray
    target: np.ndarray
    phi: np.ndarray
    orbit_id: np.ndarray
    source: np.ndarray

    def __len__(self) -> int:
        return self.target.shape[0]

    def subset(self, idx) -> "Dataset":
        return Dataset(*(getattr(self, f)[idx] for f in _FIELDS))

    @property
    def nu(self) -> np.ndarray:
        d = {3: 2, 7: 3}[self.mhat.shape[1]]
        return self.mhat[:, :d]

    def equals(self, other: "Dataset") -> bool:
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in _FIELDS)


_FIELDS = ("mhat", "zeta", "target", "phi", "orbit_id", "source")


def _concat(parts: list[Dataset]) -> Dataset:
    return Dataset(*(np.concatenate([getattr(p, f) for p in parts]) for f in _FIELDS))


@dataclass
class SplitDataset:
    train: Dataset
    validation: Dataset
    spec: DatasetSpec | None = None
    meta: dict = field(default_factory=dict)


class AnalyticSource:
    name = "analytic"

    def __init__(self, model: EnergyModel):
        self.model = model

    def __call__(self, nu, zeta):
        return self.model.envelope(nu, zeta)


class LpSource:
    """Envelope values from the lattice LP; lattice points double as queries."""

    name = "svpc_lp"

    def __init__(self, model: EnergyModel, lat: Lattice, threads: int = 1):
        self.model, self.lat, self.threads = model, lat, threads

    def __call__(self, nu, zeta):
        fld = polyconvexify(self.model, zeta, self.lat, nu, threads=self.threads)
        if fld.n_infeasible:
            raise GenerationError(f"{fld.n_infeasible} envelope queries were infeasible at zeta={zeta}")
        return fld.values


def _tuples(model, nu, zeta, target, source_name) -> Dataset:
    n = nu.shape[0]
    zeta_arr = np.tile(np.asarray(zeta, dtype=float), (n, 1)).reshape(n, len(zeta))
    phi = np.asarray(model.evaluate(nu, zeta), dtype=float)
    bad = np.flatnonzero(target > phi + ENVELOPE_SLACK)
    if bad.size:
        i = bad[0]
        raise GenerationError(
            f"envelope above density at nu={nu[i].tolist()}, zeta={list(zeta)}: "
            f"target={target[i]!r} > phi={phi[i]!r} ({bad.size} violations)"
        )
    return Dataset(minors(nu), zeta_arr, np.asarray(target, float), phi, np.zeros(n, dtype=np.int64),
                   np.full(n, source_name))


def _augment(ds: Dataset) -> Dataset:
    """Add all Pi_d images, dropping exact duplicates (first occurrence wins)."""
    nu = ds.nu
    images = [g(nu) + 0.0 for g in symmetry_group(nu.shape[1])]
    reps = len(images)
    big = Dataset(
        minors(np.concatenate(images)),
        *(np.concatenate([getattr(ds, f)] * reps) for f in _FIELDS[1:]),
    )
    keys = np.concatenate([big.mhat, big.zeta], axis=1)
    _, first = np.unique(keys, axis=0, return_index=True)
    return big.subset(np.sort(first))


def _assign_orbits(ds: Dataset) -> None:
    keys = np.concatenate([canonical(ds.nu) + 0.0, ds.zeta], axis=1)
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    ds.orbit_id = inverse.reshape(-1).astype(np.int64)


def generate(spec: DatasetSpec, source=None, *, threads: int = 1) -> SplitDataset:
    """Build the tuple set for every lattice point and parameter vector, then split."""
    lat = build_lattice(spec.lattice)
    if source is None:
        source = AnalyticSource(spec.model) if spec.source == "analytic" else LpSource(spec.model, lat, threads)
    parts = []
    for zeta in spec.parameters:
        log.info("generating tuples for zeta=%s", list(zeta))
        target = np.asarray(source(lat.points, zeta), dtype=float)
        parts.append(_tuples(spec.model, lat.points, zeta, target, spec.source))
    full = _concat(parts)
    if spec.augment:
        full = _augment(full)
    pol = spec.validation
    rng = np.random.default_rng(pol.seed)
    if pol.kind == "random_fraction":
        _assign_orbits(full)
        perm = rng.permutation(len(full))
        n_val = int(round(pol.fraction * len(full)))
        val_idx, tr_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
        train, validation = full.subset(tr_idx), full.subset(val_idx)
    else:
        overlap = set(pol.values) & set(spec.parameters)
        if overlap:
            raise GenerationError(f"held-out parameter values also in the training set: {sorted(overlap)}")
        vparts = []
        for zeta in pol.values:
            nu = lat.points
            if 0 < pol.samples_per_value < len(nu):
                nu = nu[np.sort(rng.choice(len(nu), pol.samples_per_value, replace=False))]
            vparts.append(_tuples(spec.model, nu, zeta, np.asarray(source(nu, zeta), float), spec.source))
        validation = _concat(vparts)
        # orbit ids are shared across both partitions
        both = _concat([full, validation])
        _assign_orbits(both)
        full.orbit_id, validation.orbit_id = both.orbit_id[: len(full)], both.orbit_id[len(full) :]
        train = full
    if len(train) == 0 or len(validation) == 0:
        raise GenerationError("split produced an empty partition")
    return SplitDataset(train, validation, spec)


# --- persistence ---------------------------------------------------------------


def _header(k: int, p: int) -> list[str]:
    return [f"m_{i + 1}" for i in range(k)] + [f"zeta_{i + 1}" for i in range(p)] + [
        "target", "phi", "orbit_id", "source"
    ]


def write_tuples(ds: Dataset, path) -> Path:
    path = Path(path)
    k, p = ds.mhat.shape[1], ds.zeta.shape[1]
    num = np.concatenate([ds.mhat, ds.zeta, ds.target[:, None], ds.phi[:, None]], axis=1)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(_header(k, p)) + "\n")
        for row, oid, src in zip(num.tolist(), ds.orbit_id.tolist(), ds.source.tolist()):
            fh.write(",".join(f"{x:.17g}" for x in row) + f",{oid},{src}\n")
    return path


def read_tuples(path) -> Dataset:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(path, 1, 1, "empty file") from None
        k = sum(h.startswith("m_") for h in header)
        p = sum(h.startswith("zeta_") for h in header)
        expected = _header(k, p)
        if header != expected:
            col = next((i for i, (a, b) in enumerate(zip(header, expected)) if a != b), min(len(header), len(expected)))
            raise DatasetFormatError(path, 1, col + 1, f"header mismatch: expected {expected}, got {header}")
        nnum = k + p + 2
        fast = _read_fast(fh, nnum)
    if fast is not None:
        arr, oids, srcs = fast
    else:
        arr, oids, srcs = _read_checked(path, header, nnum)
    return Dataset(
        arr[:, :k].copy(), arr[:, k : k + p].copy(), arr[:, k + p].copy(), arr[:, k + p + 1].copy(), oids, srcs
    )


def _read_fast(fh, nnum):
    """Vectorised parse of the body; ``None`` when anything is malformed."""
    dtype = [(f"f{i}", float) for i in range(nnum)] + [("oid", np.int64), ("src", "U9")]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rec = np.loadtxt(fh, dtype=dtype, delimiter=",", ndmin=1)
    except ValueError:
        return None
    if not np.all(np.isin(rec["src"], SOURCES)):
        return None
    arr = np.column_stack([rec[f"f{i}"] for i in range(nnum)]) if len(rec) else np.empty((0, nnum))
    return arr, rec["oid"].astype(np.int64), rec["src"].astype("<U9")


def _read_checked(path, header, nnum):
    """Line-by-line parse that reports the first bad field."""
    width = nnum + 2
    num, oids, srcs = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != width:
                raise DatasetFormatError(path, lineno, min(len(row), width) + 1,
                                         f"expected {width} fields, got {len(row)}")
            try:
                num.append([float(x) for x in row[:nnum]])
            except ValueError:
                col = next(i for i, x in enumerate(row[:nnum]) if not _is_float(x))
                raise DatasetFormatError(path, lineno, col + 1,
                                         f"bad number {row[col]!r} in column {header[col]}") from None
            try:
                oids.append(int(row[nnum]))
            except ValueError:
                raise DatasetFormatError(path, lineno, nnum + 1, f"bad orbit id {row[nnum]!r}") from None
            if row[nnum + 1] not in SOURCES:
                raise DatasetFormatError(path, lineno, width, f"unknown source {row[nnum + 1]!r}")
            srcs.append(row[nnum + 1])
    return np.array(num, dtype=float).reshape(-1, nnum), np.array(oids, dtype=np.int64), np.array(srcs, dtype="<U9")


def _is_float(x: str) -> bool:
    try:
        float(x)
    except ValueError:
        return False
    return True


def persist(data: SplitDataset, path) -> Path:
    """Write ``train.csv``, ``validation.csv`` and the ``dataset.json`` sidecar into ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    write_tuples(data.train, path / "train.csv")
    write_tuples(data.validation, path / "validation.csv")
    side = {"spec": data.spec.to_dict() if data.spec else None, "meta": data.meta,
            "n_train": len(data.train), "n_validation": len(data.validation)}
    (path / "dataset.json").write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")
    return path


def load(path) -> SplitDataset:
    path = Path(path)
    side = json.loads((path / "dataset.json").read_text())
    spec = DatasetSpec.from_dict(side["spec"]) if side.get("spec") else None
    return SplitDataset(read_tuples(path / "train.csv"), read_tuples(path / "validation.csv"), spec,
                        side.get("meta", {}))
