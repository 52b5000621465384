"""A single particle hopping one step per tick on a ring.

The shift ``U|x> = |x+1>`` is strictly local in discrete time, but its
generator ``P`` with ``U = exp(iP)`` (principal branch) has matrix elements
``|<y|P|x>| ≈ 1/|x-y|``, so the continuous-time dynamics ``exp(iPt)`` spreads
with a slope that decays only algebraically with distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import ValidationError
from .optimize import top_singular

MIN_RING = 11
FD_STEP = 1e-4


@dataclass(frozen=True)
class RingModel:
    L: int
    U: np.ndarray
    P: np.ndarray
    momenta: np.ndarray
    modes: np.ndarray  # columns are momentum eigenvectors

    def propagator(self, t: float) -> np.ndarray:
        """``exp(iPt)``."""
        V = self.modes
        return (V * np.exp(1j * self.momenta * t)) @ V.conj().T

    def ring_distance(self, x: int, y: int) -> int:
        d = abs(x - y) % self.L
        return min(d, self.L - d)


def build_ring(L: int) -> RingModel:
    """Shift and momentum on an odd ring of ``L >= 11`` sites.

    ``|p> = L^{-1/2} Σ_x e^{-ipx}|x>`` satisfies ``U|p> = e^{ip}|p>`` for
    ``p = 2πk/L``, ``k = -(L-1)/2, ..., (L-1)/2``.
    """
    if not isinstance(L, (int, np.integer)) or L % 2 == 0:
        raise ValidationError(f"ring length must be an odd integer, got {L!r}")
    if L < MIN_RING:
        raise ValidationError(f"ring length must be at least {MIN_RING}")
    L = int(L)
    U = np.roll(np.eye(L, dtype=complex), 1, axis=0)
    ks = np.arange(-(L - 1) // 2, (L - 1) // 2 + 1)
    p = 2 * np.pi * ks / L
    x = np.arange(L)
    V = np.exp(-1j * np.outer(x, p)) / math.sqrt(L)
    P = (V * p) @ V.conj().T
    P = (P + P.conj().T) / 2
    return RingModel(L, U, P, p, V)


def generator_error(model: RingModel) -> float:
    """Largest entry of ``exp(iP) - U``, computed with a general matrix exponential."""
    return float(np.max(np.abs(scipy.linalg.expm(1j * model.P) - model.U)))


def projector(L: int, x: int) -> np.ndarray:
    E = np.zeros((L, L), dtype=complex)
    E[x % L, x % L] = 1
    return E


def site_observable(L: int, sites, matrix) -> np.ndarray:
    """Embed a small matrix acting on the span of ``|s>`` for ``s`` in ``sites``."""
    sites = [s % L for s in sites]
    m = np.asarray(matrix, dtype=complex)
    if m.shape != (len(sites), len(sites)):
        raise ValidationError("matrix does not match the number of sites")
    A = np.zeros((L, L), dtype=complex)
    A[np.ix_(sites, sites)] = m
    return A


def discrete_locality_check(model: RingModel, A: np.ndarray, B: np.ndarray, n: int) -> float:
    """``‖[U^n A U^{-n}, B]‖``."""
    Un = np.linalg.matrix_power(model.U, int(n) % model.L)
    At = Un @ A @ Un.conj().T
    return top_singular(At @ B - B @ At)[0]


def shifted_support(model: RingModel, A: np.ndarray, n: int) -> set[int]:
    """Sites on which ``U^n A U^{-n}`` acts (rows or columns with nonzero entries)."""
    rows = np.nonzero(np.any(np.abs(A) > 0, axis=0) | np.any(np.abs(A) > 0, axis=1))[0]
    return {int((r + n) % model.L) for r in rows}


def projector_growth(model: RingModel, x: int, y: int, t: float) -> float:
    """``‖[e^{iPt}|x><x|e^{-iPt}, |y><y|]‖``."""
    W = model.propagator(t)
    col = W[:, x % model.L]
    Ax = np.outer(col, col.conj())
    By = projector(model.L, y)
    return top_singular(Ax @ By - By @ Ax)[0]


class ShiftSlope(NamedTuple):
    distance: int
    matrix_element: float
    slope_fd: float
    slope_analytic: float


def short_time_slope(model: RingModel, x: int, y: int, dt: float = FD_STEP) -> ShiftSlope:
    """Initial slope of the projector commutator, numerically and from ``|<y|P|x>|``.

    With ``c = <y|e^{iPt}|x>`` the commutator of the two rank-one projectors
    has norm ``|c| (1 - |c|²)^{1/2}``, so the slope at ``t = 0`` is
    ``|<y|P|x>|`` itself.  The finite difference uses one Richardson step.
    """
    if (x - y) % model.L == 0:
        raise ValidationError("slope needs two distinct sites")
    g1 = projector_growth(model, x, y, dt) / dt
    g2 = projector_growth(model, x, y, dt / 2) / (dt / 2)
    element = float(abs(model.P[y % model.L, x % model.L]))
    return ShiftSlope(model.ring_distance(x, y), element, 2 * g2 - g1, element)


def slope_table(model: RingModel, distances=range(1, 11), x0: int = 0) -> list[ShiftSlope]:
    return [short_time_slope(model, x0, x0 + d) for d in distances]
