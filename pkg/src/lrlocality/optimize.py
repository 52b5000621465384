"""Alternating ascent for commutator norms over local unitaries.

The objectives maximized here have the form ``‖[F(A), B̃]‖`` where ``F`` is
linear in a local operator ``A`` and ``B̃`` embeds a local operator ``B``
into the global space.  For fixed ``B`` the norm is a convex function of
``A`` (and vice versa), so its maximum over the operator-norm unit ball
sits at a unitary.  Each half-step replaces ``A`` by the polar factor of
the supergradient, which never decreases the objective.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import ArpackError, svds

#: Above this size the top singular triple comes from ARPACK, not a full SVD.
DENSE_SVD_MAX = 512
#: Same switch for value-only norms.
SPECTRAL_DENSE_MAX = 128


@dataclass(frozen=True)
class AscentOptions:
    iterations: int = 200
    restarts: int = 8
    tol: float = 1e-11


def svd(M: np.ndarray):
    """Dense SVD, falling back to the QR-iteration driver when divide-and-conquer fails.

    The divide-and-conquer routine occasionally does not converge on highly
    degenerate matrices, which commutators of structured operators often are.
    """
    try:
        return np.linalg.svd(M)
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(M, lapack_driver="gesvd")


def top_singular(M: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Largest singular value with left/right singular vectors."""
    if M.shape[0] <= DENSE_SVD_MAX or not np.any(M):
        u, s, vh = svd(M)
        return float(s[0]), u[:, 0], vh[0].conj()
    try:
        u, s, vh = svds(M, k=1, tol=0, random_state=0)
    except ArpackError:
        u, s, vh = svd(M)
    return float(s[0]), u[:, 0], vh[0].conj()


def spectral_norm(M: np.ndarray) -> float:
    """Largest singular value only.

    Lanczos (ARPACK) above a few hundred rows, where it is several times
    faster than a dense SVD; dense fallback on zero input or no convergence.
    """
    n = min(M.shape)
    if n <= SPECTRAL_DENSE_MAX or not np.any(M):
        return float(np.linalg.norm(M, 2))
    try:
        return float(svds(M, k=1, tol=0, random_state=0, return_singular_vectors=False)[0])
    except ArpackError:
        return float(svd(M)[1][0])


def polar(G: np.ndarray) -> np.ndarray:
    u, _, vh = svd(G)
    return u @ vh


class SpinFrame:
    """Embedding of operators on a subset of qubit/qudit tensor factors.

    ``positions`` are factor indices within an ``n``-factor space of local
    dimension ``d``.
    """

    def __init__(self, positions: Sequence[int], d: int, n: int):
        self.positions = list(positions)
        self.d, self.n = d, n
        self.dim = d ** n
        self.local_dim = d ** len(self.positions)
        self._rest = [k for k in range(n) if k not in self.positions]

    def left(self, B: np.ndarray, M: np.ndarray) -> np.ndarray:
        """``(B ⊗ 1) @ M`` without forming the embedded matrix."""
        k, d = len(self.positions), self.d
        t = M.reshape((d,) * self.n + (M.shape[1],))
        t = np.tensordot(B.reshape((d,) * (2 * k)), t, axes=(list(range(k, 2 * k)), self.positions))
        t = np.moveaxis(t, list(range(k)), self.positions)
        return t.reshape(M.shape)

    def right(self, M: np.ndarray, B: np.ndarray) -> np.ndarray:
        """``M @ (B ⊗ 1)``."""
        return self.left(B.T, M.T).T

    def embed(self, B: np.ndarray) -> np.ndarray:
        return self.left(B, np.eye(self.dim, dtype=complex))

    def dual(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Local matrix ``R`` with ``x† (B ⊗ 1) y = tr(B R)`` for every local ``B``."""
        d = self.d
        perm = self.positions + self._rest
        xt = x.reshape((d,) * self.n).transpose(perm).reshape(self.local_dim, -1)
        yt = y.reshape((d,) * self.n).transpose(perm).reshape(self.local_dim, -1)
        return yt @ xt.conj().T

    def complement_part(self, M: np.ndarray) -> np.ndarray:
        """``M - Γ_{complement}[M]``: remove the part acting trivially on the frame."""
        d = self.d
        perm = self.positions + self._rest
        n = self.n
        t = M.reshape((d,) * (2 * n)).transpose(perm + [p + n for p in perm])
        dl, dr = self.local_dim, self.dim // self.local_dim
        t = t.reshape(dl, dr, dl, dr)
        red = np.einsum("ajak->jk", t) / dl
        back = np.kron(np.eye(dl), red).reshape((d,) * (2 * n))
        inv = [perm.index(j) for j in range(n)]
        back = back.transpose(inv + [p + n for p in inv]).reshape(M.shape)
        return M - back


class CommutatorObjective:
    """``A, B ↦ [F(A), B̃]`` with ``F(A) = Σ_ij A_ij F[i, j]``.

    ``F`` has shape ``(da, da, D, D)``; ``frame_b`` provides ``left``,
    ``right`` and ``dual`` for the B side.
    """

    def __init__(self, F: np.ndarray, frame_b):
        self.F = F
        self.frame_b = frame_b

    def f_of(self, A: np.ndarray) -> np.ndarray:
        return np.tensordot(A, self.F, axes=([0, 1], [0, 1]))

    def matrix(self, A: np.ndarray, B: np.ndarray, FA: np.ndarray | None = None) -> np.ndarray:
        FA = self.f_of(A) if FA is None else FA
        return self.frame_b.right(FA, B) - self.frame_b.left(B, FA)

    def value(self, A, B) -> float:
        return top_singular(self.matrix(A, B))[0]

    def grad_a(self, B, u, v) -> np.ndarray:
        w1 = self.frame_b.left(B, v[:, None])[:, 0]
        w2 = self.frame_b.left(B.conj().T, u[:, None])[:, 0]
        g = (np.einsum("k,ijkl,l->ij", u.conj(), self.F, w1)
             - np.einsum("k,ijkl,l->ij", w2.conj(), self.F, v))
        return g.conj()

    def grad_b(self, FA, u, v) -> np.ndarray:
        # u† (FA B̃ - B̃ FA) v = tr(B R1) - tr(B R2)
        r1 = self.frame_b.dual(FA.conj().T @ u, v)
        r2 = self.frame_b.dual(u, FA @ v)
        return (r1 - r2).T.conj()


@dataclass
class AscentResult:
    value: float
    A: np.ndarray
    B: np.ndarray
    seed_value: float
    steps: int


def maximize_commutator(
    obj: CommutatorObjective,
    seeds_a: Sequence[np.ndarray],
    seeds_b: Sequence[np.ndarray],
    rng: np.random.Generator,
    opts: AscentOptions = AscentOptions(),
    project_a: Callable[[np.ndarray], np.ndarray] = polar,
    project_b: Callable[[np.ndarray], np.ndarray] = polar,
    sample_a: Callable[[np.random.Generator], np.ndarray] | None = None,
    sample_b: Callable[[np.random.Generator], np.ndarray] | None = None,
) -> AscentResult:
    """Best ``‖[F(A), B̃]‖`` over seed pairs, refined by alternating ascent.

    Ascent starts from the best seed pair and from ``opts.restarts`` random
    pairs drawn with ``sample_a``/``sample_b``.  Every reported value is the
    norm of an explicitly constructed commutator, hence a lower bound on
    the supremum.
    """
    best = (-1.0, None, None)
    for A in seeds_a:
        FA = obj.f_of(A)
        for B in seeds_b:
            s = top_singular(obj.matrix(A, B, FA))[0]
            if s > best[0]:
                best = (s, A, B)
    seed_value = best[0]
    starts = [(best[1], best[2])]
    if sample_a is not None and sample_b is not None:
        starts += [(sample_a(rng), sample_b(rng)) for _ in range(opts.restarts)]
    total = 0
    for A, B in starts:
        val, A, B, steps = _ascend(obj, A, B, opts, project_a, project_b)
        total += steps
        if val > best[0]:
            best = (val, A, B)
    return AscentResult(best[0], best[1], best[2], seed_value, total)


def _ascend(obj, A, B, opts, project_a, project_b):
    FA = obj.f_of(A)
    s, u, v = top_singular(obj.matrix(A, B, FA))
    steps = 0
    for steps in range(1, opts.iterations + 1):
        if s <= 1e-300:
            break
        prev = s
        G = obj.grad_a(B, u, v)
        if np.linalg.norm(G) > 1e-14:
            A_new = project_a(G)
            FA_new = obj.f_of(A_new)
            s_new, u_new, v_new = top_singular(obj.matrix(A_new, B, FA_new))
            if s_new >= s:
                A, FA, s, u, v = A_new, FA_new, s_new, u_new, v_new
        G = obj.grad_b(FA, u, v)
        if np.linalg.norm(G) > 1e-14:
            B_new = project_b(G)
            s_new, u_new, v_new = top_singular(obj.matrix(A, B_new, FA))
            if s_new >= s:
                B, s, u, v = B_new, s_new, u_new, v_new
        if s - prev <= opts.tol * max(1.0, s):
            break
    return s, A, B, steps
