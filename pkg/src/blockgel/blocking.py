"""Overlapping block construction and blockwise moment averages.

Block ``q`` (1-based) covers observations ``(q-1)L + 1, ..., (q-1)L + M``;
``Q = floor((n - M) / L) + 1`` blocks fit in a sample of size ``n``.
Observations after the end of block ``Q`` do not enter any block.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, NumericalDomainError

__all__ = [
    "BlockScheme",
    "BlockMoments",
    "make_scheme",
    "regime_scheme",
    "REGIMES",
    "block_average",
    "block_weights",
    "scatter_blocks",
    "block_moments",
    "block_jacobian",
]

REGIMES = ("i", "ii", "iii", "iv", "v")


@dataclass(frozen=True)
class BlockScheme:
    n: int
    M: int
    L: int
    Q: int

    @property
    def starts(self) -> np.ndarray:
        """0-based start index of every block."""
        return np.arange(self.Q) * self.L

    @property
    def last_index(self) -> int:
        """1-based index of the last observation used by any block."""
        return (self.Q - 1) * self.L + self.M

    def multiplicity(self) -> np.ndarray:
        """Number of blocks containing each observation (length ``n``)."""
        return scatter_blocks(self, np.ones(self.Q)) * self.M

    def overlap_counts(self):
        """Closed-form overlap counts ``(beta1, beta2)``, each ``Q x M``.

        ``beta1[q, k]`` counts earlier blocks containing the ``k``-th element
        of block ``q`` and ``beta2[q, k]`` later ones (0-based ``q`` and ``k``
        here, 1-based in the formulas ``(q-1) ^ (M-k)//L`` and
        ``(Q-q) ^ (k-1)//L``).
        """
        q = np.arange(1, self.Q + 1)[:, None]
        k = np.arange(1, self.M + 1)[None, :]
        beta1 = np.minimum(q - 1, (self.M - k) // self.L)
        beta2 = np.minimum(self.Q - q, (k - 1) // self.L)
        return beta1, beta2

    def as_dict(self) -> dict:
        return {"n": self.n, "M": self.M, "L": self.L, "Q": self.Q}


def make_scheme(n: int, M: int, L: int) -> BlockScheme:
    """Validate ``1 <= L <= M <= n`` and compute the block count."""
    n, M, L = int(n), int(M), int(L)
    if L < 1:
        raise ConfigurationError(f"block separation L={L} violates L >= 1")
    if M < L:
        raise ConfigurationError(f"block length M={M} violates M >= L (L={L})")
    if M > n:
        raise ConfigurationError(f"block length M={M} violates M <= n (n={n})")
    return BlockScheme(n=n, M=M, L=L, Q=(n - M) // L + 1)


def _root5(n: int) -> float:
    # guard floor() against n**0.2 landing a hair below an integer
    return n ** 0.2 * (1.0 + 1e-12)


def regime_scheme(regime, n: int) -> BlockScheme:
    """Blocking regimes (i)-(v) of the simulation protocol.

    (i) ``L = M = 1``; (ii) ``M = floor(n^{1/5})``, ``L = floor(M/2)``;
    (iii) ``L = M = floor(n^{1/5})``; (iv) ``M = floor(3 n^{1/5})``,
    ``L = floor(M/2)``; (v) ``L = M = floor(3 n^{1/5})``. ``L`` is clamped to
    at least 1.
    """
    key = str(regime).strip().lower()
    if key in {"1", "2", "3", "4", "5"}:
        key = REGIMES[int(key) - 1]
    if key not in REGIMES:
        raise ConfigurationError(f"unknown blocking regime {regime!r}; expected one of {REGIMES}")
    n = int(n)
    if key == "i":
        M = L = 1
    elif key in ("ii", "iii"):
        M = max(1, int(np.floor(_root5(n))))
        L = max(1, M // 2) if key == "ii" else M
    else:
        M = max(1, int(np.floor(3.0 * _root5(n))))
        L = max(1, M // 2) if key == "iv" else M
    return make_scheme(n, M, L)


def block_average(values: np.ndarray, scheme: BlockScheme) -> np.ndarray:
    """Average ``values`` (leading axis = time) over every block."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] != scheme.n:
        raise ConfigurationError(f"array has {values.shape[0]} rows but scheme expects n={scheme.n}")
    if scheme.M == 1:
        return values[: scheme.last_index : scheme.L].copy()
    used = values[: scheme.last_index]
    windows = sliding_window_view(used, scheme.M, axis=0)[:: scheme.L]
    return windows.mean(axis=-1)


def scatter_blocks(scheme: BlockScheme, a: np.ndarray) -> np.ndarray:
    """Spread per-block weights back onto time: ``c_t = sum_{q: t in B_q} a_q / M``.

    With these weights ``sum_q a_q phi_q = sum_t c_t g_t`` for any ``g``.
    """
    a = np.asarray(a, dtype=float)
    diff = np.zeros(scheme.n + 1)
    starts = scheme.starts
    np.add.at(diff, starts, a)
    np.add.at(diff, starts + scheme.M, -a)
    return np.cumsum(diff[:-1]) / scheme.M


def block_weights(scheme: BlockScheme) -> np.ndarray:
    """Time weights ``w_t`` with ``phi_bar = sum_t w_t g_t``; they sum to one."""
    return scatter_blocks(scheme, np.full(scheme.Q, 1.0 / scheme.Q))


@dataclass(frozen=True)
class BlockMoments:
    """Blockwise moment averages at a fixed parameter value.

    ``phi`` is ``Q x r``, ``phi_bar`` its column mean and ``omega_hat`` the
    uncentred second moment ``phi' phi / Q``.
    """

    phi: np.ndarray
    phi_bar: np.ndarray
    omega_hat: np.ndarray

    @classmethod
    def from_phi(cls, phi) -> "BlockMoments":
        phi = np.atleast_2d(np.asarray(phi, dtype=float))
        Q = phi.shape[0]
        omega = phi.T @ phi / Q
        omega = 0.5 * (omega + omega.T)
        return cls(phi=phi, phi_bar=phi.mean(axis=0), omega_hat=omega)

    @property
    def Q(self) -> int:
        return self.phi.shape[0]

    @property
    def r(self) -> int:
        return self.phi.shape[1]


def _check_scheme(data, scheme):
    if scheme.n != data.n:
        raise ConfigurationError(f"scheme built for n={scheme.n} but data has n={data.n}")


def block_moments(data, model, scheme: BlockScheme, theta) -> BlockMoments:
    """Evaluate ``g`` on every observation and average it over the blocks."""
    _check_scheme(data, scheme)
    g = model.moments(data.values, theta)
    used = g[: scheme.last_index]
    if not np.all(np.isfinite(used)):
        t = int(np.argwhere(~np.all(np.isfinite(used), axis=1))[0, 0])
        q = max(0, (t - scheme.M) // scheme.L + 1)
        raise NumericalDomainError(
            f"moment function is non-finite at observation t={t + 1} (block q={q + 1})",
            q=q + 1,
            t=t + 1,
        )
    return BlockMoments.from_phi(block_average(g, scheme))


def block_jacobian(data, model, scheme: BlockScheme, theta) -> np.ndarray:
    """``r x p`` Jacobian of ``phi_bar`` at ``theta``."""
    _check_scheme(data, scheme)
    jac = model.jacobians(data.values, theta)
    return np.einsum("t,tij->ij", block_weights(scheme), jac)
