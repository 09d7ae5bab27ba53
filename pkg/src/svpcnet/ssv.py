"""Signed singular values, the minors lifting and the symmetry group Pi_d.

Vectors are plain numpy arrays whose last axis holds the ``d`` signed
singular values, so every function here works on a single point of shape
``(d,)`` as well as on a batch of shape ``(n, d)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SUPPORTED_DIMS = (2, 3)


class DimensionError(ValueError):
    """Raised for spatial dimensions other than 2 or 3."""


def _check_dim(d: int) -> int:
    if d not in SUPPORTED_DIMS:
        raise DimensionError(f"unsupported dimension d={d}; expected 2 or 3")
    return d


def n_minors(d: int) -> int:
    """Length of the minors vector, ``2**d - 1``."""
    return 2 ** _check_dim(d) - 1


def dim_from_minors(k: int) -> int:
    for d in SUPPORTED_DIMS:
        if 2**d - 1 == k:
            return d
    raise DimensionError(f"no dimension has {k} minors")


def minors(nu) -> np.ndarray:
    """Lift signed singular values to their minors.

    d=2: (n1, n2, n1 n2)
    d=3: (n1, n2, n3, n2 n3, n3 n1, n1 n2, n1 n2 n3)
    """
    nu = np.asarray(nu, dtype=float)
    d = _check_dim(nu.shape[-1])
    if d == 2:
        n1, n2 = nu[..., 0], nu[..., 1]
        return np.stack([n1, n2, n1 * n2], axis=-1)
    n1, n2, n3 = nu[..., 0], nu[..., 1], nu[..., 2]
    # triple product in a fixed (sorted-magnitude) order so it is exactly Pi_3 invariant
    a = np.sort(np.abs(nu), axis=-1)
    det = np.prod(np.sign(nu), axis=-1) * (a[..., 0] * a[..., 1] * a[..., 2])
    return np.stack([n1, n2, n3, n2 * n3, n3 * n1, n1 * n2, det], axis=-1)


@dataclass(frozen=True)
class SignedPermutation:
    """Element ``P diag(eps)`` of Pi_d acting as ``v -> signs * v[perm]``."""

    perm: tuple[int, ...]
    signs: tuple[int, ...]

    def __post_init__(self):
        if sorted(self.perm) != list(range(len(self.perm))):
            raise ValueError(f"not a permutation: {self.perm}")
        if len(self.signs) != len(self.perm) or any(s not in (-1, 1) for s in self.signs):
            raise ValueError(f"bad sign vector: {self.signs}")
        if int(np.prod(self.signs)) != 1:
            raise ValueError("sign product must be +1")

    @property
    def d(self) -> int:
        return len(self.perm)

    @property
    def is_identity(self) -> bool:
        return self.perm == tuple(range(self.d)) and all(s == 1 for s in self.signs)

    def __call__(self, nu) -> np.ndarray:
        nu = np.asarray(nu, dtype=float)
        return nu[..., list(self.perm)] * np.asarray(self.signs, dtype=float)

    def matrix(self) -> np.ndarray:
        m = np.zeros((self.d, self.d))
        for i, (j, s) in enumerate(zip(self.perm, self.signs)):
            m[i, j] = s
        return m


@lru_cache(maxsize=None)
def _group(d: int) -> tuple[SignedPermutation, ...]:
    elems = []
    for perm in itertools.permutations(range(d)):
        for signs in itertools.product((1, -1), repeat=d):
            if int(np.prod(signs)) == 1:
                elems.append(SignedPermutation(tuple(perm), tuple(signs)))
    return tuple(elems)


def symmetry_group(d: int) -> list[SignedPermutation]:
    """All ``d! * 2**(d-1)`` signed permutations with positive sign product.

    The identity comes first.
    """
    return list(_group(_check_dim(d)))


def orbit(nu) -> np.ndarray:
    """Distinct images ``{pi(nu) : pi in Pi_d}`` in group order, shape ``(k, d)``.

    Duplicates are removed by exact equality, so inputs on the diagonals or at
    the origin produce short orbits.
    """
    nu = np.asarray(nu, dtype=float)
    if nu.ndim != 1:
        raise ValueError("orbit expects a single point of shape (d,)")
    seen = {}
    for g in symmetry_group(nu.shape[0]):
        img = g(nu) + 0.0  # folds -0.0 into 0.0
        seen.setdefault(img.tobytes(), img)
    return np.array(list(seen.values()))


def orbit_key(nu) -> tuple[float, ...]:
    """Lexicographically smallest orbit member; identical for all members."""
    return min(tuple(float(x) for x in row) for row in orbit(nu))


def canonical(nu) -> np.ndarray:
    """Canonical representative of the orbit of ``nu``.

    Entries sorted by decreasing magnitude, all nonnegative except the last
    one, which carries the sign of the product.
    """
    nu = np.asarray(nu, dtype=float)
    mags = np.abs(nu)
    order = np.argsort(-mags, axis=-1, kind="stable")
    out = np.take_along_axis(mags, order, axis=-1)
    sign = np.prod(np.sign(nu), axis=-1)
    out[..., -1] = np.where(sign < 0, -out[..., -1], out[..., -1])
    return out


def signed_singular_values(F) -> np.ndarray:
    """Signed singular values of 2x2 matrices from the closed-form SVD.

    Returns ``(nu1, nu2)`` with ``nu1 >= |nu2|`` and ``sign(nu1 nu2) ==
    sign(det F)``. Accepts shape ``(2, 2)`` or ``(..., 2, 2)``.
    """
    F = np.asarray(F, dtype=float)
    if F.shape[-2:] != (2, 2):
        raise DimensionError("only 2x2 matrices are supported")
    a, b = F[..., 0, 0], F[..., 0, 1]
    c, d = F[..., 1, 0], F[..., 1, 1]
    # F = [[E+Fq, -H+G], [H+G, E-Fq]]; sigma = Q +- R, det = Q^2 - R^2
    q = np.hypot(0.5 * (a + d), 0.5 * (c - b))
    r = np.hypot(0.5 * (a - d), 0.5 * (c + b))
    return np.stack([q + r, q - r], axis=-1)
