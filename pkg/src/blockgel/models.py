"""Moment-restriction models ``E g(X_t, theta_0) = 0``.

Built-in models accept either a single observation (1-D) or a stack of
observations (2-D, one row per time point) and return ``g`` with matching
leading shape.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from .blocking import block_weights
from .errors import ConfigurationError

__all__ = [
    "MomentModel",
    "finite_difference_jacobian",
    "model_mean",
    "model_logistic",
    "model_var_residual",
    "model_mean_unit_variance",
    "lag_stack",
]


def finite_difference_jacobian(func, x, theta) -> np.ndarray:
    """Central differences of ``func(x, theta)`` in ``theta``.

    Step for coordinate ``j`` is ``1e-6 * max(1, |theta_j|)``. Returns
    ``(..., r, p)``.
    """
    theta = np.asarray(theta, dtype=float)
    cols = []
    for j in range(theta.size):
        h = 1e-6 * max(1.0, abs(theta[j]))
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] -= h
        cols.append((np.asarray(func(x, up)) - np.asarray(func(x, dn))) / (2.0 * h))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class MomentModel:
    """A moment function ``g: (x, theta) -> R^r`` with optional analytic Jacobian.

    Parameters
    ----------
    r, p : int
        Number of moment conditions and parameters.
    evaluate : callable
        ``evaluate(x, theta)``. When ``vectorized`` is true it must also
        accept a 2-D ``x`` and return one row per observation.
    jacobian : callable, optional
        ``jacobian(x, theta)`` returning ``r x p`` (or ``n x r x p``).
        Falls back to central finite differences.
    bounds : sequence of (low, high), optional
        Box for the parameter space.
    d : int, optional
        Expected observation width, checked against the data.
    pilot : callable, optional
        ``pilot(values, scheme)`` giving a starting value for the optimizer.
    """

    r: int
    p: int
    evaluate: Callable
    jacobian: Optional[Callable] = None
    bounds: Optional[tuple] = None
    d: Optional[int] = None
    name: str = "custom"
    vectorized: bool = True
    pilot: Optional[Callable] = None
    spec: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.r < 1 or self.p < 1:
            raise ConfigurationError(f"need r >= 1 and p >= 1, got r={self.r}, p={self.p}")

    def _check_width(self, x):
        if self.d is not None and x.shape[-1] != self.d:
            raise ConfigurationError(
                f"model {self.name!r} expects observations of width {self.d}, got {x.shape[-1]}"
            )

    def moments(self, x, theta) -> np.ndarray:
        """``g`` for every row of ``x`` as an ``n x r`` array."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        theta = np.asarray(theta, dtype=float)
        self._check_width(x)
        if self.vectorized:
            out = np.asarray(self.evaluate(x, theta), dtype=float)
        else:
            out = np.array([self.evaluate(row, theta) for row in x], dtype=float)
        return out.reshape(x.shape[0], self.r)

    def _moments_fd(self, x, theta):
        return self.moments(x, theta)

    def jacobians(self, x, theta) -> np.ndarray:
        """Per-row Jacobians ``n x r x p``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        theta = np.asarray(theta, dtype=float)
        self._check_width(x)
        if self.jacobian is None:
            jac = finite_difference_jacobian(self._moments_fd, x, theta)
        elif self.vectorized:
            jac = np.asarray(self.jacobian(x, theta), dtype=float)
        else:
            jac = np.array([self.jacobian(row, theta) for row in x], dtype=float)
        return np.broadcast_to(jac, (x.shape[0], self.r, self.p))

    def start(self, values, scheme) -> np.ndarray:
        if self.pilot is not None:
            return np.asarray(self.pilot(values, scheme), dtype=float)
        return np.zeros(self.p)


def model_mean(d: int) -> MomentModel:
    """``g(x, theta) = x - theta`` with ``r = p = d``."""
    d = int(d)
    if d < 1:
        raise ConfigurationError(f"mean model needs d >= 1, got {d}")
    eye = -np.eye(d)

    def evaluate(x, theta):
        return np.asarray(x, dtype=float) - theta

    def jacobian(x, theta):
        x = np.asarray(x)
        if x.ndim == 1:
            return eye.copy()
        return np.broadcast_to(eye, (x.shape[0], d, d))

    def pilot(values, scheme):
        return block_weights(scheme) @ values

    return MomentModel(
        r=d, p=d, evaluate=evaluate, jacobian=jacobian, d=d, name="mean",
        pilot=pilot, spec={"kind": "mean", "d": d},
    )


def model_logistic(p: int) -> MomentModel:
    """Logistic conditional-moment model with squared-covariate instruments.

    Rows are ``(Y, Z_1, ..., Z_p)``. The residual is
    ``u = Y - sigmoid(1 + Z'theta)`` and ``g = (Z, Z**2) * u`` so ``r = 2p``.
    """
    p = int(p)
    if p < 1:
        raise ConfigurationError(f"logistic model needs p >= 1, got {p}")

    def evaluate(x, theta):
        x = np.asarray(x, dtype=float)
        y, z = x[..., 0], x[..., 1:]
        u = y - expit(1.0 + z @ theta)
        return np.concatenate([z, z * z], axis=-1) * u[..., None]

    def jacobian(x, theta):
        x = np.asarray(x, dtype=float)
        z = x[..., 1:]
        s = expit(1.0 + z @ theta)
        du = -(s * (1.0 - s))[..., None] * z
        inst = np.concatenate([z, z * z], axis=-1)
        return inst[..., :, None] * du[..., None, :]

    return MomentModel(
        r=2 * p, p=p, evaluate=evaluate, jacobian=jacobian, d=p + 1, name="logistic",
        spec={"kind": "logistic", "p": p},
    )


def model_var_residual(s: int, m: int) -> MomentModel:
    """VAR(m) residual-times-lags moments.

    Rows are the stacked ``(Y_t, Y_{t-1}, ..., Y_{t-m})`` of width ``s(m+1)``
    (see :func:`lag_stack`). ``theta`` is the row-major vectorisation of
    ``A = [A_1, ..., A_m]`` (``s x sm``) and ``g = e_t (x) z_t`` with residual
    ``e_t = Y_t - A z_t`` and lag stack ``z_t``; ``r = p = s^2 m``.
    """
    s, m = int(s), int(m)
    if s < 1 or m < 1:
        raise ConfigurationError(f"VAR model needs s, m >= 1, got s={s}, m={m}")
    k = s * m
    width = s * (m + 1)

    def split(x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != width:
            raise ConfigurationError(f"VAR(s={s}, m={m}) rows must have width {width}, got {x.shape[-1]}")
        return x[..., :s], x[..., s:]

    def evaluate(x, theta):
        y, z = split(x)
        A = np.asarray(theta, dtype=float).reshape(s, k)
        e = y - z @ A.T
        return (e[..., :, None] * z[..., None, :]).reshape(*e.shape[:-1], s * k)

    def jacobian(x, theta):
        _, z = split(x)
        zz = z[..., :, None] * z[..., None, :]
        eye = np.eye(s)
        out = -eye[:, None, :, None] * zz[..., None, :, None, :]
        return out.reshape(*z.shape[:-1], s * k, s * k)

    def pilot(values, scheme):
        y, z = split(values)
        w = block_weights(scheme)
        szz = (z * w[:, None]).T @ z
        syz = (y * w[:, None]).T @ z
        return np.linalg.solve(szz, syz.T).T.reshape(-1)

    return MomentModel(
        r=s * k, p=s * k, evaluate=evaluate, jacobian=jacobian, d=width, name="var",
        pilot=pilot, spec={"kind": "var", "s": s, "m": m},
    )


def model_mean_unit_variance() -> MomentModel:
    """Scalar over-identified model ``g = (x - theta, x^2 - theta^2 - 1)``.

    Valid when the data have mean ``theta`` and unit variance; used to
    exercise the over-identification test.
    """

    def evaluate(x, theta):
        x = np.asarray(x, dtype=float)[..., 0]
        t = theta[0]
        return np.stack([x - t, x * x - t * t - 1.0], axis=-1)

    def jacobian(x, theta):
        x = np.asarray(x, dtype=float)
        col = np.array([[-1.0], [-2.0 * theta[0]]])
        return np.broadcast_to(col, x.shape[:-1] + (2, 1))

    def pilot(values, scheme):
        return np.array([block_weights(scheme) @ values[:, 0]])

    return MomentModel(
        r=2, p=1, evaluate=evaluate, jacobian=jacobian, d=1, name="unit_variance",
        pilot=pilot, spec={"kind": "unit_variance"},
    )


def lag_stack(series, m: int) -> np.ndarray:
    """Rows ``(Y_t, Y_{t-1}, ..., Y_{t-m})`` for ``t = m+1, ..., n``."""
    y = np.atleast_2d(np.asarray(series, dtype=float))
    if y.shape[0] == 1:
        y = y.T
    n = y.shape[0]
    if n <= m:
        raise ConfigurationError(f"series of length {n} too short for {m} lags")
    return np.hstack([y[m - j : n - j] for j in range(m + 1)])
