"""Fully and partially input-convex networks over the minors vector.

Parameters live in a flat ``dict`` of numpy arrays. Weight matrices are
stored ``(out, in)`` and applied to row-batched inputs as ``x @ W.T``.

Layer ``i`` (``0 <= i < k``, ``k = len(hidden) + 1``) of the FICNN::

    z[i+1] = g(Wz{i} z[i] + Wm{i} m + b{i})          (no Wz0, z[0] = 0)

and of the PICNN, with ``u[0] = zeta``::

    u[i+1] = relu(Wt{i} u[i] + bt{i})
    z[i+1] = g(Wz{i} (z[i] * relu(Wzu{i} u[i] + bz{i}))
               + Wm{i} (m * (Wmu{i} u[i] + bm{i})) + Wu{i} u[i] + b{i})

``g`` is ReLU on hidden layers and the identity on the scalar output. The
``Wz`` matrices must stay nonnegative for convexity in ``m``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..ssv import dim_from_minors, minors, symmetry_group

FICNN = "ficnn"
PICNN = "picnn"
ACTIVATIONS = ("relu", "linear")
PROJECTION_EPS = 1e-6


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class Architecture:
    variant: str
    n_minors: int
    n_params: int = 0
    hidden: tuple[int, ...] = (10, 20)
    param_hidden: tuple[int, ...] = ()
    activations: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(self.hidden))
        object.__setattr__(self, "param_hidden", tuple(self.param_hidden))
        if self.activations is None:
            object.__setattr__(self, "activations", ("relu",) * len(self.hidden) + ("linear",))
        object.__setattr__(self, "activations", tuple(self.activations))
        dim_from_minors(self.n_minors)
        if self.variant not in (FICNN, PICNN):
            raise ValueError(f"unknown variant {self.variant!r}")
        if not self.hidden:
            raise ValueError("at least one hidden layer is required")
        if len(self.activations) != self.n_layers or self.activations[-1] != "linear":
            raise ValueError("one activation per layer, and the output layer must be linear")
        if any(a not in ACTIVATIONS for a in self.activations):
            raise ValueError(f"activations must be convex and nondecreasing: {ACTIVATIONS}")
        if self.variant == FICNN and (self.n_params or self.param_hidden):
            raise ValueError("a FICNN has no parameter path")
        if self.variant == PICNN:
            if self.n_params < 1:
                raise ValueError("a PICNN needs at least one parameter input")
            if len(self.param_hidden) != len(self.hidden):
                raise ValueError("parameter path needs one width per hidden layer")

    @property
    def n_layers(self) -> int:
        return len(self.hidden) + 1

    @property
    def d(self) -> int:
        return dim_from_minors(self.n_minors)

    @property
    def z_sizes(self) -> tuple[int, ...]:
        """Widths of z[1..k]; the last is the scalar output."""
        return self.hidden + (1,)

    @property
    def u_sizes(self) -> tuple[int, ...]:
        """Widths of u[0..k-1]."""
        return (self.n_params,) + self.param_hidden

    def shapes(self) -> dict[str, tuple[int, ...]]:
        k, out = self.n_minors, self.z_sizes
        s = {}
        for i in range(self.n_layers):
            prev = out[i - 1] if i else 0
            if self.variant == FICNN:
                if i:
                    s[f"Wz{i}"] = (out[i], prev)
                s[f"Wm{i}"] = (out[i], k)
                s[f"b{i}"] = (out[i],)
                continue
            ui = self.u_sizes[i]
            if i < self.n_layers - 1:
                s[f"Wt{i}"] = (self.u_sizes[i + 1], ui)
                s[f"bt{i}"] = (self.u_sizes[i + 1],)
            if i:
                s[f"Wz{i}"] = (out[i], prev)
                s[f"Wzu{i}"] = (prev, ui)
                s[f"bz{i}"] = (prev,)
            s[f"Wm{i}"] = (out[i], k)
            s[f"Wmu{i}"] = (k, ui)
            s[f"bm{i}"] = (k,)
            s[f"Wu{i}"] = (out[i], ui)
            s[f"b{i}"] = (out[i],)
        return s

    def constrained_keys(self) -> list[str]:
        return [f"Wz{i}" for i in range(1, self.n_layers)]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, cfg: dict) -> "Architecture":
        return cls(**cfg)


@dataclass
class NetworkParams:
    arch: Architecture
    tensors: dict[str, np.ndarray]

    def __post_init__(self):
        shapes = self.arch.shapes()
        if set(shapes) != set(self.tensors):
            raise ShapeError(f"parameter keys {sorted(self.tensors)} do not match {sorted(shapes)}")
        for key, shape in shapes.items():
            if self.tensors[key].shape != shape:
                raise ShapeError(f"{key}: expected shape {shape}, got {self.tensors[key].shape}")

    def __getitem__(self, key) -> np.ndarray:
        return self.tensors[key]

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.arch, {k: v.copy() for k, v in self.tensors.items()})

    def n_weights(self) -> int:
        return sum(v.size for v in self.tensors.values())

    def flat(self) -> np.ndarray:
        return np.concatenate([self.tensors[k].ravel() for k in sorted(self.tensors)])


def project_weights(params: NetworkParams, eps: float = PROJECTION_EPS) -> NetworkParams:
    """Apply ``x -> max(x, 0) + eps`` to every ``Wz`` matrix.

    The map is not idempotent (positive entries gain ``eps`` each time), so
    the training loop applies it exactly once per optimiser step.
    """
    out = params.copy()
    for key in params.arch.constrained_keys():
        out.tensors[key] = np.maximum(out.tensors[key], 0.0) + eps
    return out


def init_params(arch: Architecture, seed: int) -> NetworkParams:
    """``Wz ~ N(0.1, 0.1)`` then projected, other weights ``U(-1/sqrt(n), 1/sqrt(n))``
    with ``n`` the fan-in, biases zero."""
    rng = np.random.default_rng(seed)
    constrained = set(arch.constrained_keys())
    tensors = {}
    for key, shape in arch.shapes().items():
        if key in constrained:
            tensors[key] = rng.normal(0.1, 0.1, size=shape)
        elif len(shape) == 2:
            bound = 1.0 / np.sqrt(shape[1])
            tensors[key] = rng.uniform(-bound, bound, size=shape)
        else:
            tensors[key] = np.zeros(shape)
    return project_weights(NetworkParams(arch, tensors))


def _relu(x):
    return np.maximum(x, 0.0)


def _check_inputs(arch: Architecture, mhat, zeta):
    mhat = np.atleast_2d(np.asarray(mhat, dtype=float))
    if mhat.shape[-1] != arch.n_minors:
        raise ShapeError(f"expected {arch.n_minors} minors, got {mhat.shape[-1]}")
    if arch.variant == FICNN:
        return mhat, None
    zeta = np.asarray(zeta, dtype=float)
    if zeta.ndim < 2:
        zeta = np.broadcast_to(zeta.reshape(1, -1), (mhat.shape[0], zeta.size))
    if zeta.shape != (mhat.shape[0], arch.n_params):
        raise ShapeError(f"expected parameters of shape {(mhat.shape[0], arch.n_params)}, got {zeta.shape}")
    return mhat, zeta


def forward(params: NetworkParams, mhat, zeta=None, *, cache: bool = False):
    """Network output for a batch; with ``cache=True`` also the tape for :func:`backward`."""
    arch, P = params.arch, params.tensors
    m, u = _check_inputs(arch, mhat, zeta)
    tape = []
    z = None
    for i in range(arch.n_layers):
        rec = {"z": z, "u": u}
        if arch.variant == FICNN:
            pre = m @ P[f"Wm{i}"].T + P[f"b{i}"]
            if i:
                pre += z @ P[f"Wz{i}"].T
        else:
            gm = u @ P[f"Wmu{i}"].T + P[f"bm{i}"]
            pre = (m * gm) @ P[f"Wm{i}"].T + u @ P[f"Wu{i}"].T + P[f"b{i}"]
            rec["gm"] = gm
            if i:
                gz_pre = u @ P[f"Wzu{i}"].T + P[f"bz{i}"]
                gz = _relu(gz_pre)
                pre += (z * gz) @ P[f"Wz{i}"].T
                rec["gz_pre"], rec["gz"] = gz_pre, gz
            if i < arch.n_layers - 1:
                ut_pre = u @ P[f"Wt{i}"].T + P[f"bt{i}"]
                rec["ut_pre"] = ut_pre
                u = _relu(ut_pre)
        rec["pre"] = pre
        z = _relu(pre) if arch.activations[i] == "relu" else pre
        tape.append(rec)
    out = z[:, 0]
    if cache:
        return out, (m, tape)
    return out


def backward(params: NetworkParams, tape, dout) -> dict[str, np.ndarray]:
    """Gradients of ``sum(dout * output)`` w.r.t. every parameter.

    The ReLU derivative at exactly zero is taken as zero.
    """
    arch, P = params.arch, params.tensors
    m, layers = tape
    grads = {}
    dz = np.asarray(dout, dtype=float).reshape(-1, 1)
    du = None  # gradient flowing into u[i+1] from later layers
    for i in reversed(range(arch.n_layers)):
        rec = layers[i]
        dpre = dz * (rec["pre"] > 0.0) if arch.activations[i] == "relu" else dz
        grads[f"b{i}"] = dpre.sum(axis=0)
        if arch.variant == FICNN:
            grads[f"Wm{i}"] = dpre.T @ m
            if i:
                grads[f"Wz{i}"] = dpre.T @ rec["z"]
                dz = dpre @ P[f"Wz{i}"]
            continue
        u = rec["u"]
        du_i = np.zeros_like(u)
        if i < arch.n_layers - 1:
            dut = du * (rec["ut_pre"] > 0.0)
            grads[f"Wt{i}"] = dut.T @ u
            grads[f"bt{i}"] = dut.sum(axis=0)
            du_i += dut @ P[f"Wt{i}"]
        gm = rec["gm"]
        grads[f"Wm{i}"] = dpre.T @ (m * gm)
        dgm = (dpre @ P[f"Wm{i}"]) * m
        grads[f"Wmu{i}"] = dgm.T @ u
        grads[f"bm{i}"] = dgm.sum(axis=0)
        du_i += dgm @ P[f"Wmu{i}"]
        grads[f"Wu{i}"] = dpre.T @ u
        du_i += dpre @ P[f"Wu{i}"]
        if i:
            z, gz = rec["z"], rec["gz"]
            grads[f"Wz{i}"] = dpre.T @ (z * gz)
            dzg = dpre @ P[f"Wz{i}"]
            dgz = dzg * z * (rec["gz_pre"] > 0.0)
            grads[f"Wzu{i}"] = dgz.T @ u
            grads[f"bz{i}"] = dgz.sum(axis=0)
            du_i += dgz @ P[f"Wzu{i}"]
            dz = dzg * gz
        du = du_i
    return grads


def predict(params: NetworkParams, nu, zeta=None) -> np.ndarray:
    """Network value at signed singular values ``nu`` (minors computed here)."""
    return forward(params, minors(nu), zeta)


def symmetrize_prediction(params: NetworkParams, nu, zeta=None) -> np.ndarray:
    """Average of the network over the Pi_d orbit of ``nu``.

    One batched forward pass per group element. The per-point values are
    sorted before summation so the result is bitwise invariant under Pi_d.
    """
    nu = np.atleast_2d(np.asarray(nu, dtype=float))
    vals = np.stack([predict(params, g(nu), zeta) for g in symmetry_group(nu.shape[-1])], axis=-1)
    return np.sort(vals, axis=-1).sum(axis=-1) / vals.shape[-1]


def ensemble_predict(params_list, nu, zeta=None, *, symmetrize: bool = False):
    """Mean and sample standard deviation over network realisations."""
    if not params_list:
        raise ValueError("empty ensemble")
    f = symmetrize_prediction if symmetrize else predict
    vals = np.stack([f(p, nu, zeta) for p in params_list])
    std = vals.std(axis=0, ddof=1) if len(params_list) > 1 else np.zeros(vals.shape[1:])
    return vals.mean(axis=0), std
