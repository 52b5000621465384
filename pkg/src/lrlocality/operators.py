"""Dense operators on tensor-product lattice Hilbert spaces.

Every :class:`LatticeOperator` carries its support (a :class:`SiteSet`)
and a matrix whose tensor factors follow the support's canonical site
order.  Operators with different supports are combined by embedding both
into the union of supports first.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce as _fold
from typing import Iterable

import numpy as np

from .errors import ResourceCapError, ValidationError
from .lattice import Lattice, SiteLike, SiteSet

#: Default largest Hilbert-space dimension for dense matrices (12 qubits).
DEFAULT_DIM_CAP = 4096

HERMITIAN_TOL = 1e-12
NORM_TOL = 1e-10

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class SiteRegistry:
    """Lattice, uniform local dimension and the finite region Λ in play."""

    lattice: Lattice
    site_dim: int
    region: SiteSet
    dim_cap: int = DEFAULT_DIM_CAP

    def __post_init__(self):
        region = self.lattice.site_set(self.region)
        object.__setattr__(self, "region", region)
        if self.site_dim < 2:
            raise ValidationError("local dimension must be at least 2")
        if self.site_dim ** len(region) > self.dim_cap:
            raise ResourceCapError(
                f"Hilbert dimension {self.site_dim}^{len(region)} exceeds cap {self.dim_cap}"
            )

    @classmethod
    def chain(cls, n: int, site_dim: int = 2, periodic: bool = False, **kw) -> "SiteRegistry":
        lat = Lattice.chain(n, periodic)
        return cls(lat, site_dim, lat.sites(), **kw)

    def dim(self, X: SiteSet | None = None) -> int:
        return self.site_dim ** len(self.region if X is None else X)

    def site_set(self, sites: Iterable[SiteLike]) -> SiteSet:
        X = self.lattice.site_set(sites)
        if not X <= self.region:
            raise ValidationError(f"{X!r} is not inside the region {self.region!r}")
        return X

    def op(self, matrix, sites: Iterable[SiteLike]) -> "LatticeOperator":
        return LatticeOperator(self.site_set(sites), np.asarray(matrix, dtype=complex), self)

    def identity(self, sites: Iterable[SiteLike] = ()) -> "LatticeOperator":
        X = self.site_set(sites)
        return LatticeOperator(X, np.eye(self.dim(X), dtype=complex), self)

    def zero(self, sites: Iterable[SiteLike] = ()) -> "LatticeOperator":
        X = self.site_set(sites)
        n = self.dim(X)
        return LatticeOperator(X, np.zeros((n, n), dtype=complex), self)

    def pauli(self, word: str, sites: Iterable[SiteLike], coeff: complex = 1.0) -> "LatticeOperator":
        """Pauli product such as ``"ZZ"`` placed on ``sites`` (in the given order)."""
        if self.site_dim != 2:
            raise ValidationError("Pauli strings need qubit sites")
        sites = [self.lattice.check_site(s) for s in sites]
        if len(word) != len(sites) or len(set(sites)) != len(sites):
            raise ValidationError(f"Pauli word {word!r} does not match sites {sites!r}")
        try:
            by_site = {s: PAULI[c] for s, c in zip(sites, word.upper())}
        except KeyError:
            raise ValidationError(f"bad Pauli word {word!r}") from None
        X = self.site_set(sites)
        mats = [by_site[s] for s in X]
        return LatticeOperator(X, coeff * _fold(np.kron, mats, np.eye(1, dtype=complex)), self)


class LatticeOperator:
    """Dense matrix on ``H_support`` together with its support metadata."""

    __array_priority__ = 100
    __slots__ = ("support", "matrix", "registry")

    def __init__(self, support: SiteSet, matrix: np.ndarray, registry: SiteRegistry,
                 hermitian: bool = False):
        support = SiteSet(support)
        matrix = np.asarray(matrix, dtype=complex)
        n = registry.site_dim ** len(support)
        if matrix.shape != (n, n):
            raise ValidationError(
                f"matrix shape {matrix.shape} does not match support of {len(support)} sites"
            )
        if hermitian and not is_hermitian(matrix):
            raise ValidationError("operator flagged Hermitian is not Hermitian")
        self.support = support
        self.matrix = matrix
        self.registry = registry

    def __repr__(self) -> str:
        return f"LatticeOperator(support={self.support!r}, dim={self.matrix.shape[0]})"

    @property
    def dag(self) -> "LatticeOperator":
        return LatticeOperator(self.support, self.matrix.conj().T, self.registry)

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return is_hermitian(self.matrix, tol)

    def _joint(self, other: "LatticeOperator"):
        _check_registry(self, other)
        S = self.support | other.support
        return S, embed(self, S).matrix, embed(other, S).matrix

    def __add__(self, other):
        if not isinstance(other, LatticeOperator):
            return NotImplemented
        S, a, b = self._joint(other)
        return LatticeOperator(S, a + b, self.registry)

    def __sub__(self, other):
        if not isinstance(other, LatticeOperator):
            return NotImplemented
        S, a, b = self._joint(other)
        return LatticeOperator(S, a - b, self.registry)

    def __neg__(self):
        return LatticeOperator(self.support, -self.matrix, self.registry)

    def __mul__(self, c):
        if isinstance(c, LatticeOperator):
            return NotImplemented
        return LatticeOperator(self.support, c * self.matrix, self.registry)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return LatticeOperator(self.support, self.matrix / c, self.registry)

    def __matmul__(self, other):
        S, a, b = self._joint(other)
        return LatticeOperator(S, a @ b, self.registry)

    def norm(self) -> float:
        return op_norm(self)


def is_hermitian(matrix: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    scale = max(1.0, float(np.max(np.abs(matrix), initial=0.0)))
    return bool(np.max(np.abs(matrix - matrix.conj().T), initial=0.0) <= tol * scale)


def _check_registry(a: LatticeOperator, b: LatticeOperator) -> None:
    ra, rb = a.registry, b.registry
    if ra is not rb and (ra.site_dim != rb.site_dim or ra.lattice != rb.lattice
                         or ra.region != rb.region):
        raise ValidationError("operators belong to different site registries")


def _permute_factors(matrix: np.ndarray, d: int, perm: list[int]) -> np.ndarray:
    """Reorder tensor factors: new factor ``k`` is old factor ``perm[k]``."""
    n = len(perm)
    if perm == list(range(n)):
        return matrix
    t = matrix.reshape((d,) * (2 * n))
    t = t.transpose(perm + [p + n for p in perm])
    return t.reshape(d ** n, d ** n)


def embed(A: LatticeOperator, into: Iterable[SiteLike] | SiteSet) -> LatticeOperator:
    """``A ⊗ 1`` on the larger set ``into``, factors in canonical order."""
    reg = A.registry
    T = SiteSet(into)
    if not A.support <= T:
        raise ValidationError(f"support {A.support!r} not contained in {T!r}")
    if T == A.support:
        return A
    rest = T - A.support
    big = np.kron(A.matrix, np.eye(reg.site_dim ** len(rest), dtype=complex))
    order = list(A.support.sites) + list(rest.sites)
    perm = [order.index(s) for s in T]
    return LatticeOperator(T, _permute_factors(big, reg.site_dim, perm), reg)


def partial_trace(matrix: np.ndarray, d: int, n: int, keep: list[int]) -> np.ndarray:
    """Normalized partial trace keeping the tensor factors listed in ``keep``."""
    drop = [k for k in range(n) if k not in keep]
    if not drop:
        return matrix
    perm = list(keep) + drop
    dk, dt = d ** len(keep), d ** len(drop)
    t = _permute_factors(matrix, d, perm).reshape(dk, dt, dk, dt)
    return np.einsum("ajbj->ab", t) / dt


def reduce(A: LatticeOperator, X: Iterable[SiteLike] | SiteSet) -> LatticeOperator:
    """Reduction map Γ_X: trace against the maximally mixed state off ``X``.

    The result is supported on ``X``.  ``X = ∅`` gives a 1x1 operator
    holding the normalized trace.
    """
    reg = A.registry
    X = SiteSet(X)
    if not X <= reg.region:
        raise ValidationError(f"{X!r} is not inside the region {reg.region!r}")
    keep_sites = A.support & X
    keep = [A.support.index(s) for s in keep_sites]
    m = partial_trace(A.matrix, reg.site_dim, len(A.support), keep)
    return embed(LatticeOperator(keep_sites, m, reg), X)


def op_norm(A: LatticeOperator | np.ndarray) -> float:
    """Operator (spectral) norm."""
    m = A.matrix if isinstance(A, LatticeOperator) else np.asarray(A)
    if m.size == 0:
        return 0.0
    if m.shape == (1, 1):
        return float(abs(m[0, 0]))
    if is_hermitian(m, 0.0):
        return float(np.max(np.abs(np.linalg.eigvalsh(m))))
    return float(np.linalg.norm(m, 2))


def commutator(A: LatticeOperator, B: LatticeOperator) -> LatticeOperator:
    S, a, b = A._joint(B)
    return LatticeOperator(S, a @ b - b @ a, A.registry)


def haar_unitary(n: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Haar-random unitary (or a stack of them) from QR of a Ginibre matrix."""
    shape = (n, n) if size is None else (size, n, n)
    z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    phases = diag / np.abs(diag)
    return q * phases[..., None, :]


def haar_twirl_estimate(A: LatticeOperator, X: Iterable[SiteLike] | SiteSet,
                        samples: int, seed: int, batch: int = 2048) -> LatticeOperator:
    """Monte-Carlo average of ``(1_X ⊗ U) A (1_X ⊗ U†)`` over Haar ``U`` on ``Λ \\ X``.

    Converges to ``reduce(A, X)`` embedded on Λ.
    """
    if samples < 1:
        raise ValidationError("need at least one Haar sample")
    reg = A.registry
    X = SiteSet(X)
    full = embed(A, reg.region).matrix
    comp = reg.region - X
    if not len(comp):
        return LatticeOperator(reg.region, full.copy(), reg)
    dx, dc = reg.dim(X), reg.dim(comp)
    order = list(X.sites) + list(comp.sites)
    perm = [reg.region.index(s) for s in order]
    # work with factors ordered (X, X^c) so that the twirl acts on the second block
    m = _permute_factors(full, reg.site_dim, perm).reshape(dx, dc, dx, dc)
    rng = np.random.default_rng(seed)
    acc = np.zeros_like(m)
    done = 0
    while done < samples:
        k = min(batch, samples - done)
        U = haar_unitary(dc, rng, size=k)
        acc += np.einsum("sij,ajbk,slk->aibl", U, m, U.conj(), optimize=True)
        done += k
    avg = (acc / samples).reshape(dx * dc, dx * dc)
    inv = [order.index(s) for s in reg.region]
    return LatticeOperator(reg.region, _permute_factors(avg, reg.site_dim, inv), reg)


def random_hermitian(n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * (z + z.conj().T) / 2


def weyl_basis(d: int, n_sites: int) -> list[np.ndarray]:
    """Product basis of clock-and-shift unitaries on ``n_sites`` sites.

    Orthonormal for ``<A, B> = tr(A† B) / dim``; the identity comes first.
    For ``d = 2`` the single-site elements are the Paulis up to phases,
    and the Paulis themselves are used.
    """
    if d == 2:
        single = [PAULI["I"], PAULI["X"], PAULI["Y"], PAULI["Z"]]
    else:
        w = np.exp(2j * np.pi / d)
        clock = np.diag(w ** np.arange(d))
        shift = np.roll(np.eye(d, dtype=complex), 1, axis=0)
        single = [np.linalg.matrix_power(shift, a) @ np.linalg.matrix_power(clock, b)
                  for a in range(d) for b in range(d)]
    basis = [np.eye(1, dtype=complex)]
    for _ in range(n_sites):
        basis = [np.kron(b, s) for b in basis for s in single]
    return basis
