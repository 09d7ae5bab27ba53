"""Structured lattices in signed-singular-value space."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..ssv import _check_dim

SPACINGS = ("uniform", "quadratic")


class LatticeSpecError(ValueError):
    pass


@dataclass(frozen=True)
class Segment:
    """``count`` knots on ``[lo, hi]``.

    ``spacing="quadratic"`` clusters knots around ``refine_at`` (default: the
    midpoint) with a quadratic map of a uniform parameter; the endpoints and
    the refinement point are always knots.
    """

    lo: float
    hi: float
    count: int
    spacing: str = "uniform"
    refine_at: float | None = None

    def __post_init__(self):
        if self.count < 2:
            raise LatticeSpecError(f"segment needs at least 2 knots, got {self.count}")
        if not self.lo < self.hi:
            raise LatticeSpecError(f"segment bounds must satisfy lo < hi, got [{self.lo}, {self.hi}]")
        if self.spacing not in SPACINGS:
            raise LatticeSpecError(f"unknown spacing {self.spacing!r}")
        if self.refine_at is not None and not self.lo <= self.refine_at <= self.hi:
            raise LatticeSpecError("refinement point outside the segment")

    def knots(self) -> np.ndarray:
        n = self.count
        if self.spacing == "uniform":
            x = self.lo + (self.hi - self.lo) * np.arange(n) / (n - 1)
            x[-1] = self.hi
        else:
            p = 0.5 * (self.lo + self.hi) if self.refine_at is None else self.refine_at
            i0 = int(round((p - self.lo) / (self.hi - self.lo) * (n - 1)))
            t = np.arange(n, dtype=float)
            x = np.empty(n)
            left, right = t <= i0, t > i0
            if i0 > 0:
                x[left] = p - (p - self.lo) * ((i0 - t[left]) / i0) ** 2
            if i0 < n - 1:
                x[right] = p + (self.hi - p) * ((t[right] - i0) / (n - 1 - i0)) ** 2
            x[i0] = p
        if self.lo == -self.hi and (self.spacing == "uniform" or x[n // 2] == 0.0):
            # mirror symmetric axes exactly so Pi_d images of knots are knots
            x = 0.5 * (x - x[::-1])
        return x


@dataclass(frozen=True)
class LatticeSpec:
    """Per-axis segment lists; knots on an axis are the sorted union."""

    axes: tuple[tuple[Segment, ...], ...]

    def __post_init__(self):
        _check_dim(len(self.axes))
        for ax in self.axes:
            if len(ax) == 0:
                raise LatticeSpecError("empty axis")

    @property
    def d(self) -> int:
        return len(self.axes)

    @classmethod
    def uniform(cls, d: int, lo: float, hi: float, count: int, spacing="uniform", refine_at=None):
        seg = Segment(lo, hi, count, spacing, refine_at)
        return cls(tuple((seg,) for _ in range(d)))

    def to_dict(self) -> dict:
        return {"axes": [[asdict(s) for s in ax] for ax in self.axes]}

    @classmethod
    def from_dict(cls, cfg: dict) -> "LatticeSpec":
        if set(cfg) != {"axes"}:
            raise LatticeSpecError(f"lattice spec takes exactly the key 'axes', got {sorted(cfg)}")
        try:
            axes = tuple(tuple(Segment(**s) for s in ax) for ax in cfg["axes"])
        except TypeError as exc:
            raise LatticeSpecError(str(exc)) from None
        return cls(axes)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class Lattice:
    """Cartesian product of axis knots, row-major (first axis slowest)."""

    knots: tuple[np.ndarray, ...]
    points: np.ndarray = field(repr=False)

    @property
    def d(self) -> int:
        return len(self.knots)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(k) for k in self.knots)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def bounds(self) -> np.ndarray:
        return np.array([[k[0], k[-1]] for k in self.knots])

    def contains(self, nu) -> np.ndarray:
        nu = np.asarray(nu, dtype=float)
        b = self.bounds
        return np.all((nu >= b[:, 0]) & (nu <= b[:, 1]), axis=-1)

    @classmethod
    def from_knots(cls, knots) -> "Lattice":
        knots = tuple(np.asarray(k, dtype=float) for k in knots)
        mesh = np.meshgrid(*knots, indexing="ij")
        points = np.stack([m.ravel() for m in mesh], axis=-1)
        return cls(knots, points)


def axis_knots(segments) -> np.ndarray:
    knots = np.unique(np.concatenate([s.knots() for s in segments]))
    if len(knots) < 2:
        raise LatticeSpecError("axis has fewer than two distinct knots")
    return knots


def build_lattice(spec: LatticeSpec) -> Lattice:
    return Lattice.from_knots(axis_knots(ax) for ax in spec.axes)
