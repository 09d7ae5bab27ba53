"""Isotropic energy densities written in signed singular values.

Covers the Kohn-Strang-Dolzmann (KSD) benchmark and its two-parameter
generalisation (GKSD), both with closed-form polyconvex envelopes, and the
incremental isotropic damage density built on a Saint Venant-Kirchhoff or
neo-Hookean base energy.

All densities take ``nu`` with the signed singular values on the last axis.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .ssv import _check_dim

SQRT2 = np.sqrt(2.0)


class ParameterError(ValueError):
    """Invalid model parameter (e.g. a vanishing GKSD alpha)."""


class DomainError(ValueError):
    """Argument outside the domain of a damage function."""


@dataclass(frozen=True)
class MaterialParams:
    """Lame constants and damage constants.

    Defaults are the values used for the damage experiments: mu=0.5, lam=0,
    d0=0.5, d_inf=0.99 and a saturation cutoff alpha_inf=4.
    """

    mu: float = 0.5
    lam: float = 0.0
    d0: float = 0.5
    d_inf: float = 0.99
    alpha_inf: float = 4.0

    def __post_init__(self):
        if not 0.0 < self.d_inf < 1.0:
            raise ParameterError(f"d_inf must lie in (0, 1), got {self.d_inf}")
        if self.d0 <= 0.0:
            raise ParameterError(f"d0 must be positive, got {self.d0}")
        if self.alpha_inf <= 0.0:
            raise ParameterError(f"alpha_inf must be positive, got {self.alpha_inf}")

    def to_dict(self) -> dict:
        return asdict(self)


DEFAULT_PARAMS = MaterialParams()


def _sq_norm(nu):
    # summed in sorted order so the result is exactly invariant under Pi_d
    nu = np.asarray(nu, dtype=float)
    return np.sum(np.sort(nu * nu, axis=-1), axis=-1)


# --- Kohn-Strang-Dolzmann ------------------------------------------------


def ksd_phi(nu):
    r2 = _sq_norm(nu)
    r = np.sqrt(r2)
    return np.where(r >= SQRT2 - 1.0, 1.0 + r2, 2.0 * np.sqrt(2.0) * r)


def ksd_phi_pc(nu):
    nu = np.asarray(nu, dtype=float)
    a1, a2 = np.abs(nu[..., 0]), np.abs(nu[..., 1])
    rho = a1 + a2
    return np.where(rho >= 1.0, 1.0 + _sq_norm(nu), 2.0 * (rho - a1 * a2))


def _check_gksd(lam, alp):
    if np.any(np.asarray(alp) <= 0.0):
        raise ParameterError("GKSD alpha must be positive")
    if np.any(np.asarray(lam) < 0.0):
        raise ParameterError("GKSD lambda must be nonnegative")


def gksd_phi(nu, lam, alp):
    _check_gksd(lam, alp)
    r2 = _sq_norm(nu)
    r = np.sqrt(r2)
    thresh = np.sqrt(lam / alp) * (SQRT2 - 1.0)
    return np.where(r >= thresh, lam + alp * r2, 2.0 * np.sqrt(2.0 * lam * alp) * r)


def gksd_phi_pc(nu, lam, alp):
    _check_gksd(lam, alp)
    nu = np.asarray(nu, dtype=float)
    a1, a2 = np.abs(nu[..., 0]), np.abs(nu[..., 1])
    rho = a1 + a2
    upper = lam + alp * _sq_norm(nu)
    lower = 2.0 * np.sqrt(lam * alp) * rho - 2.0 * alp * (a1 * a2)
    return np.where(rho >= np.sqrt(lam / alp), upper, lower)


# --- undamaged base energies ---------------------------------------------


def stvk_phi0(nu, mp: MaterialParams = DEFAULT_PARAMS):
    nu = np.asarray(nu, dtype=float)
    d = _check_dim(nu.shape[-1])
    sq = np.sort(nu * nu, axis=-1)
    return 0.25 * mp.mu * np.sum((sq - 1.0) ** 2, axis=-1) + 0.125 * mp.lam * (
        np.sum(sq, axis=-1) - d
    ) ** 2


def nh_phi0(nu, mp: MaterialParams = DEFAULT_PARAMS):
    """Compressible neo-Hookean energy; ``+inf`` where the product is <= 0."""
    nu = np.asarray(nu, dtype=float)
    d = _check_dim(nu.shape[-1])
    det = np.prod(np.sign(nu), axis=-1) * np.prod(np.sort(np.abs(nu), axis=-1), axis=-1)
    ok = det > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        logj = np.log(np.where(ok, det, 1.0))
    val = 0.5 * mp.mu * (_sq_norm(nu) - d) - mp.mu * logj + 0.5 * mp.lam * logj**2
    return np.where(ok, val, np.inf)


BASE_ENERGIES = {"stvk": stvk_phi0, "nh": nh_phi0}


def base_energy(name: str):
    try:
        return BASE_ENERGIES[name.lower()]
    except KeyError:
        raise ParameterError(f"unknown base energy {name!r}") from None


# --- damage ----------------------------------------------------------------


def _check_alpha(alpha):
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha < 0.0):
        raise DomainError("internal variable alpha must be nonnegative")
    return alpha


def damage_D(alpha, mp: MaterialParams = DEFAULT_PARAMS):
    alpha = _check_alpha(alpha)
    return mp.d_inf * (1.0 - np.exp(-alpha / mp.d0))


def damage_Dbar(alpha, mp: MaterialParams = DEFAULT_PARAMS):
    """Antiderivative of :func:`damage_D`."""
    alpha = _check_alpha(alpha)
    return mp.d_inf * (alpha + mp.d0 * np.exp(-alpha / mp.d0))


def path_p(nu, alpha_k, mp: MaterialParams = DEFAULT_PARAMS, base: str = "stvk"):
    """Updated internal variable ``max(phi0(nu), alpha_k)``."""
    alpha_k = _check_alpha(alpha_k)
    return np.maximum(base_energy(base)(nu, mp), alpha_k)


def phi_tilde(nu, alpha_k, mp: MaterialParams = DEFAULT_PARAMS, base: str = "stvk"):
    """Normalised incremental damage density (the part depending on nu_{k+1})."""
    alpha_k = _check_alpha(alpha_k)
    phi0 = base_energy(base)(nu, mp)
    finite = np.isfinite(phi0)
    phi0_f = np.where(finite, phi0, 0.0)
    p = np.maximum(phi0_f, alpha_k)
    Dp = damage_D(p, mp)
    val = (
        (1.0 - Dp) * phi0_f
        + p * Dp
        - alpha_k * damage_D(alpha_k, mp)
        - damage_Dbar(p, mp)
        + damage_Dbar(alpha_k, mp)
    )
    return np.where(finite, val, np.inf)


def phi_shift(nu_k, alpha_k, mp: MaterialParams = DEFAULT_PARAMS, base: str = "stvk"):
    """Additive constant ``-(1 - D(alpha_k)) phi0(nu_k)``."""
    alpha_k = _check_alpha(alpha_k)
    return -(1.0 - damage_D(alpha_k, mp)) * base_energy(base)(nu_k, mp)


def phi_damage(nu, nu_k, alpha_k, mp: MaterialParams = DEFAULT_PARAMS, base: str = "stvk"):
    """Full incremental density as the sum of its normalised part and shift."""
    return phi_tilde(nu, alpha_k, mp, base) + phi_shift(nu_k, alpha_k, mp, base)


# --- model wrapper -----------------------------------------------------------

MODEL_KINDS = ("ksd", "gksd", "stvk_damage", "nh_damage")


@dataclass(frozen=True)
class EnergyModel:
    """A parameter-dependent density ``phi(nu; zeta)`` with optional envelope.

    ``zeta`` has length ``arity``: nothing for KSD, ``(lambda, alpha)`` for
    GKSD and ``(alpha_k,)`` for the normalised damage densities.
    """

    kind: str
    params: MaterialParams = field(default_factory=MaterialParams)
    d: int = 2

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ParameterError(f"unknown model kind {self.kind!r}; choose from {MODEL_KINDS}")
        _check_dim(self.d)
        if self.kind in ("ksd", "gksd") and self.d != 2:
            raise ParameterError(f"{self.kind} is defined for d=2 only")

    @property
    def arity(self) -> int:
        return {"ksd": 0, "gksd": 2}.get(self.kind, 1)

    @property
    def is_damage(self) -> bool:
        return self.kind.endswith("_damage")

    @property
    def base(self) -> str | None:
        return self.kind.split("_")[0] if self.is_damage else None

    @property
    def has_envelope(self) -> bool:
        return not self.is_damage

    def _zeta(self, zeta):
        z = np.atleast_1d(np.asarray(zeta if zeta is not None else (), dtype=float))
        if z.shape[-1] != self.arity:
            raise ParameterError(f"{self.kind} expects {self.arity} parameters, got {z.shape[-1]}")
        return z

    def evaluate(self, nu, zeta=()):
        z = self._zeta(zeta)
        if self.kind == "ksd":
            return ksd_phi(nu)
        if self.kind == "gksd":
            return gksd_phi(nu, z[..., 0], z[..., 1])
        return phi_tilde(nu, z[..., 0], self.params, self.base)

    def envelope(self, nu, zeta=()):
        z = self._zeta(zeta)
        if self.kind == "ksd":
            return ksd_phi_pc(nu)
        if self.kind == "gksd":
            return gksd_phi_pc(nu, z[..., 0], z[..., 1])
        raise ParameterError(f"no closed-form envelope for {self.kind}")

    def shift(self, nu_k, alpha_k):
        if not self.is_damage:
            raise ParameterError(f"{self.kind} has no shift term")
        return phi_shift(nu_k, alpha_k, self.params, self.base)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "d": self.d, **self.params.to_dict()}

    @classmethod
    def from_dict(cls, cfg: dict) -> "EnergyModel":
        cfg = dict(cfg)
        kind = cfg.pop("kind")
        d = cfg.pop("d", 2)
        return cls(kind=kind, params=MaterialParams(**cfg), d=d)
