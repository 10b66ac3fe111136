"""Concave link functions rho(v) defining the EL, ET and CU members of the GEL family."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError

__all__ = ["LinkKind", "LinkFunction", "make_link"]


class LinkKind(str, enum.Enum):
    EL = "EL"
    ET = "ET"
    CU = "CU"


@dataclass(frozen=True)
class LinkFunction:
    """A concave link ``rho`` with first and second derivatives.

    ``lower`` is the left end of the admissible domain (``-inf`` when the
    link is defined on the whole line). The EL domain is further shrunk by a
    safeguard ``eps`` supplied by the caller, see :meth:`in_domain`.
    """

    kind: LinkKind
    rho: Callable[[np.ndarray], np.ndarray]
    rho_v: Callable[[np.ndarray], np.ndarray]
    rho_vv: Callable[[np.ndarray], np.ndarray]
    lower: float = -np.inf

    @property
    def rho0(self) -> float:
        return float(self.rho(np.zeros(1))[0])

    @property
    def wilks_factor(self) -> float:
        """``2 rho_vv(0) / rho_v(0)**2``; equal to -2 for every shipped link."""
        z = np.zeros(1)
        return float(2.0 * self.rho_vv(z)[0] / self.rho_v(z)[0] ** 2)

    @property
    def bounded(self) -> bool:
        return np.isfinite(self.lower)

    def in_domain(self, v, eps: float = 0.0):
        v = np.asarray(v, dtype=float)
        if not self.bounded:
            return np.isfinite(v)
        return v > self.lower + eps


def _el_rho(v):
    v = np.asarray(v, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log1p(v)
    return np.where(v > -1.0, out, -np.inf)


def _el_rho_v(v):
    return 1.0 / (1.0 + np.asarray(v, dtype=float))


def _el_rho_vv(v):
    return -1.0 / (1.0 + np.asarray(v, dtype=float)) ** 2


def _et_rho(v):
    with np.errstate(over="ignore"):
        return -np.exp(np.asarray(v, dtype=float))


def _cu_rho(v):
    v = np.asarray(v, dtype=float)
    return -v - 0.5 * v * v


def _cu_rho_v(v):
    return -1.0 - np.asarray(v, dtype=float)


def _cu_rho_vv(v):
    return np.full_like(np.asarray(v, dtype=float), -1.0)


_LINKS = {
    LinkKind.EL: (_el_rho, _el_rho_v, _el_rho_vv, -1.0),
    LinkKind.ET: (_et_rho, _et_rho, _et_rho, -np.inf),
    LinkKind.CU: (_cu_rho, _cu_rho_v, _cu_rho_vv, -np.inf),
}


def make_link(kind) -> LinkFunction:
    """Return the link for ``kind`` (``"EL"``, ``"ET"`` or ``"CU"``, case-insensitive).

    EL: ``log(1 + v)`` on ``v > -1``; ET: ``-exp(v)``; CU: ``-v - v**2 / 2``.
    """
    if isinstance(kind, LinkFunction):
        return kind
    try:
        kind = LinkKind(str(kind.value if isinstance(kind, LinkKind) else kind).upper())
    except ValueError:
        raise ConfigurationError(f"unknown link {kind!r}; expected one of EL, ET, CU") from None
    rho, rho_v, rho_vv, lower = _LINKS[kind]
    return LinkFunction(kind, rho, rho_v, rho_vv, lower)
