"""Fermionic lattice algebra in the Jordan-Wigner representation.

Modes are ordered by ``(site, j)`` in canonical site order, followed by
auxiliary modes.  With the annihilator ``a = |0><1|`` and the string
``Z = diag(1, -1) = (-1)^n``,

    f_m = Z ⊗ ... ⊗ Z ⊗ a ⊗ 1 ⊗ ... ⊗ 1     (a in slot m).

Local questions about a set of modes are answered in a *frame*: the
signed permutation that reorders the Fock basis so that those modes come
first.  In that frame every operator generated by the chosen modes is a
plain tensor factor on the leading qubits, and the partial tracial state
over the remaining modes is the normalized qubit partial trace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce as _fold
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .diagnosis import (
    EXACT,
    EpsilonEntry,
    EpsilonTable,
    LocalityCertificate,
    ProofChecks,
    _assemble,
    mk_constant,
)
from .errors import ResourceCapError, ValidationError
from .lattice import Lattice, SiteSet, distance, subsets
from .operators import haar_unitary, is_hermitian, op_norm
from .optimize import (
    AscentOptions,
    CommutatorObjective,
    SpinFrame,
    maximize_commutator,
    svd,
    top_singular,
)
from .potential import ZERO_TERM_TOL, _complex, decay_fit_from_norms

#: Largest number of modes, auxiliaries included (dimension 1024).
MODE_CAP = 10
CAR_TOL = 1e-12

_A = np.array([[0, 1], [0, 0]], dtype=complex)
_Z = np.diag([1.0, -1.0]).astype(complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_I = np.eye(2, dtype=complex)


def _kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    return _fold(np.kron, mats, np.eye(1, dtype=complex))


def _popcount_parity(n_bits: int) -> np.ndarray:
    """``(-1)^{popcount(i)}`` for every basis index on ``n_bits`` qubits."""
    idx = np.arange(2**n_bits)
    bits = (idx[:, None] >> np.arange(n_bits)[None, :]) & 1
    return 1 - 2 * (bits.sum(axis=1) % 2)


class Frame:
    """Fock-space reordering that puts ``first`` ahead of every other mode.

    Represents the signed permutation ``W`` with ``W f_m W† = f'_m``, where
    ``f'`` is the Jordan-Wigner representation in the new mode order.  The
    sign of a basis state is ``(-1)`` to the number of occupied mode pairs
    whose relative order is swapped.
    """

    def __init__(self, n_modes: int, first: Sequence[int]):
        first = list(first)
        if len(set(first)) != len(first) or any(not 0 <= m < n_modes for m in first):
            raise ValidationError(f"bad mode list {first!r}")
        self.n_modes = n_modes
        self.first = first
        self.order = first + [m for m in range(n_modes) if m not in first]
        self.k = len(first)
        M = n_modes
        idx = np.arange(2**M)
        # bit of mode m in index i: mode 0 is the most significant qubit
        bits = (idx[:, None] >> (M - 1 - np.arange(M))[None, :]) & 1
        newbits = bits[:, self.order]
        self.new_index = (newbits << (M - 1 - np.arange(M))[None, :]).sum(axis=1)
        pos = np.empty(M, dtype=int)
        pos[self.order] = np.arange(M)
        swapped = np.zeros(len(idx), dtype=int)
        for p, q in combinations(range(M), 2):
            if pos[p] > pos[q]:
                swapped += bits[:, p] & bits[:, q]
        self.sign = (1 - 2 * (swapped % 2)).astype(float)

    def to_frame(self, A: np.ndarray) -> np.ndarray:
        s = self.sign
        B = np.empty_like(A)
        B[np.ix_(self.new_index, self.new_index)] = A * s[:, None] * s[None, :]
        return B

    def from_frame(self, B: np.ndarray) -> np.ndarray:
        s = self.sign
        return B[np.ix_(self.new_index, self.new_index)] * s[:, None] * s[None, :]

    def state_to_frame(self, psi: np.ndarray) -> np.ndarray:
        out = np.empty_like(psi)
        out[self.new_index] = psi * self.sign.reshape((-1,) + (1,) * (psi.ndim - 1))
        return out

    def embed_local(self, a: np.ndarray) -> np.ndarray:
        """Operator generated by the leading modes, given by its local matrix."""
        rest = 2 ** (self.n_modes - self.k)
        return self.from_frame(np.kron(a, np.eye(rest, dtype=complex)))

    def local_part(self, A: np.ndarray) -> np.ndarray:
        """Normalized partial trace over the trailing modes, in frame coordinates."""
        dl, dr = 2**self.k, 2 ** (self.n_modes - self.k)
        t = self.to_frame(A).reshape(dl, dr, dl, dr)
        return np.einsum("ajbj->ab", t) / dr


class FermionAlgebra:
    """Fermion modes on a finite set of lattice sites plus auxiliary modes.

    Parameters
    ----------
    lattice : Lattice or int
        An int ``n`` means an open chain of ``n`` sites.
    modes_per_site : int
        ``d``, the size of the index set at every site.
    aux : int
        Number of auxiliary modes appended after the lattice modes.
    region : iterable of sites, optional
        Sites carrying modes; the whole lattice by default.
    """

    def __init__(self, lattice: Lattice | int, modes_per_site: int = 1, aux: int = 0,
                 region: Iterable | None = None, mode_cap: int = MODE_CAP):
        if isinstance(lattice, int):
            lattice = Lattice.chain(lattice)
        self.lattice = lattice
        self.d = int(modes_per_site)
        if self.d < 1 or aux < 0:
            raise ValidationError("need at least one mode per site and a nonnegative aux count")
        self.region = lattice.sites() if region is None else lattice.site_set(region)
        self.aux = int(aux)
        self.modes: list[tuple] = [(s, j) for s in self.region for j in range(1, self.d + 1)]
        self.modes += [("aux", s) for s in range(1, self.aux + 1)]
        self.mode_cap = mode_cap
        if len(self.modes) > mode_cap:
            raise ResourceCapError(f"{len(self.modes)} modes exceed the cap of {mode_cap}")
        self._index = {m: i for i, m in enumerate(self.modes)}
        self._frames: dict[tuple[int, ...], Frame] = {}

    # -- bookkeeping
    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def n_lattice_modes(self) -> int:
        return len(self.region) * self.d

    @property
    def dim(self) -> int:
        return 2**self.n_modes

    @property
    def lattice_dim(self) -> int:
        return 2**self.n_lattice_modes

    def with_aux(self, aux: int) -> "FermionAlgebra":
        return FermionAlgebra(self.lattice, self.d, aux, self.region, self.mode_cap)

    def mode(self, site, j: int = 1) -> int:
        s = self.lattice.check_site(site)
        try:
            return self._index[(s, int(j))]
        except KeyError:
            raise ValidationError(f"no mode ({site!r}, {j}) in this algebra") from None

    def site_modes(self, X: Iterable) -> list[int]:
        X = self.lattice.site_set(X)
        if not X <= self.region:
            raise ValidationError(f"{X!r} is not inside the fermion region")
        return [self._index[(s, j)] for s in X for j in range(1, self.d + 1)]

    def aux_modes(self, which: Iterable[int] | None = None) -> list[int]:
        which = range(1, self.aux + 1) if which is None else which
        return [self._index[("aux", int(s))] for s in which]

    def frame(self, first: Sequence[int]) -> Frame:
        key = tuple(first)
        if key not in self._frames:
            self._frames[key] = Frame(self.n_modes, key)
        return self._frames[key]

    # -- operators
    def annihilator(self, m: int) -> np.ndarray:
        M = self.n_modes
        if not 0 <= m < M:
            raise ValidationError(f"mode index {m} out of range")
        return _kron_all([_Z] * m + [_A] + [_I] * (M - m - 1))

    def creator(self, m: int) -> np.ndarray:
        return self.annihilator(m).conj().T

    def number(self, m: int) -> np.ndarray:
        diag = np.ones(1)
        for k in range(self.n_modes):
            diag = np.kron(diag, [0.0, 1.0] if k == m else [1.0, 1.0])
        return np.diag(diag).astype(complex)

    def parity_diag(self, modes: Iterable[int]) -> np.ndarray:
        modes = set(modes)
        diag = np.ones(1)
        for k in range(self.n_modes):
            diag = np.kron(diag, [1.0, -1.0] if k in modes else [1.0, 1.0])
        return diag

    def parity_modes(self, modes: Iterable[int]) -> np.ndarray:
        return np.diag(self.parity_diag(modes)).astype(complex)

    def lift(self, A: np.ndarray) -> np.ndarray:
        """Operator on the lattice modes, viewed on lattice plus auxiliary modes."""
        A = np.asarray(A, dtype=complex)
        if A.shape == (self.dim, self.dim):
            return A
        if A.shape != (self.lattice_dim, self.lattice_dim):
            raise ValidationError(f"operator of shape {A.shape} does not fit this algebra")
        return np.kron(A, np.eye(2**self.aux, dtype=complex))

    def drop_aux(self, A: np.ndarray, tol: float = 1e-10) -> np.ndarray:
        """Inverse of :meth:`lift`; fails if ``A`` acts on the auxiliary modes."""
        if self.aux == 0:
            return A
        da, dl = 2**self.aux, self.lattice_dim
        t = A.reshape(dl, da, dl, da)
        core = np.einsum("ajbj->ab", t) / da
        if np.max(np.abs(np.kron(core, np.eye(da)) - A), initial=0.0) > tol * max(1.0, np.max(np.abs(A))):
            raise ValidationError("operator acts nontrivially on auxiliary modes")
        return core

    def majorana_even_basis(self, k: int) -> list[np.ndarray]:
        """Even Majorana monomials on ``k`` leading modes (identity first).

        Orthonormal for the normalized trace inner product and spanning the
        even operators on those modes.
        """
        gammas = []
        for m in range(k):
            for P in (_X, _Y):
                gammas.append(_kron_all([_Z] * m + [P] + [_I] * (k - m - 1)))
        out = []
        for size in range(0, 2 * k + 1, 2):
            for combo in combinations(range(2 * k), size):
                out.append(_fold(np.matmul, [gammas[c] for c in combo], np.eye(2**k, dtype=complex)))
        return out

    # -- maps
    def tracial_state(self, A: np.ndarray) -> complex:
        A = np.asarray(A)
        return complex(np.trace(A) / A.shape[0])

    def parity(self, X: Iterable | None = None, include_aux: bool = False) -> np.ndarray:
        """``P_X = Π_{x ∈ X} Π_j (-1)^{n_{x,j}}``; all lattice modes when ``X`` is None."""
        modes = list(range(self.n_lattice_modes)) if X is None else self.site_modes(X)
        if include_aux:
            modes += self.aux_modes()
        return self.parity_modes(modes)


def parity(alg: FermionAlgebra, X: Iterable | None = None) -> np.ndarray:
    return alg.parity(X)


@dataclass
class GradedOperator:
    """An operator together with its even and odd parts with respect to ``P``."""

    operator: np.ndarray
    even_part: np.ndarray
    odd_part: np.ndarray
    parity: np.ndarray

    def is_even(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.odd_part), initial=0.0) <= tol * max(1.0, np.max(np.abs(self.operator))))

    def is_odd(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.even_part), initial=0.0) <= tol * max(1.0, np.max(np.abs(self.operator))))


def even_odd_split(alg: FermionAlgebra, A: np.ndarray, X: Iterable | None = None) -> GradedOperator:
    """``A± = (A ± P_X A P_X) / 2``; ``X`` defaults to every mode of the algebra."""
    A = np.asarray(A, dtype=complex)
    if X is None:
        Pd = alg.parity_diag(range(alg.n_modes))
        if A.shape == (alg.lattice_dim, alg.lattice_dim) and alg.aux:
            Pd = alg.with_aux(0).parity_diag(range(alg.n_lattice_modes))
    else:
        if A.shape[0] != alg.dim:
            A = alg.lift(A)
        Pd = alg.parity_diag(alg.site_modes(X))
    PAP = Pd[:, None] * A * Pd[None, :]
    return GradedOperator(A, (A + PAP) / 2, (A - PAP) / 2, np.diag(Pd).astype(complex))


def is_even(alg: FermionAlgebra, A: np.ndarray, tol: float = 1e-12) -> bool:
    return even_odd_split(alg, A).is_even(tol)


def fermionic_reduce(alg: FermionAlgebra, A: np.ndarray, X: Iterable, aux: int | None = None) -> np.ndarray:
    """Fermionic reduction ``Γ^{ΛS}_X`` on lattice plus ``aux`` auxiliary modes.

    ``Γ[A] = 2 (ω_T[A P_T^+] P_T^+ + ω_T[A P_T^-] P_T^-)`` with ``T = X^c ∪ S``
    and ``ω_T`` the partial tracial state.  ``A`` may be given on the
    lattice modes only (it is lifted) or on the full mode space; the result
    lives on the full mode space of the algebra with ``aux`` auxiliaries.
    """
    if aux is not None and aux != alg.aux:
        alg = alg.with_aux(aux)
    A = alg.lift(A)
    keep = alg.site_modes(X)
    fr = alg.frame(keep)
    k, t = len(keep), alg.n_modes - len(keep)
    p_t = _popcount_parity(t).astype(float)
    # in the frame P_T is the parity of the trailing block: diag over 2^k copies
    big = np.tile(p_t, 2**k)
    A_f = fr.to_frame(A)
    out = np.zeros_like(A_f)
    for sgn in (1.0, -1.0):
        proj = (1 + sgn * big) / 2
        dl, dr = 2**k, 2**t
        tt = (A_f * proj[None, :]).reshape(dl, dr, dl, dr)
        m = np.einsum("ajbj->ab", tt) / dr
        out += 2 * np.kron(m, np.diag((1 + sgn * p_t) / 2))
    return fr.from_frame(out)


def fermionic_reduce_lattice(alg: FermionAlgebra, A: np.ndarray, X: Iterable, aux: int = 1) -> np.ndarray:
    """``Γ_X`` on lattice operators, returned on the lattice modes (needs ``aux >= 1``)."""
    if aux < 1:
        raise ValidationError("the lattice reduction needs at least one auxiliary mode")
    big = alg.with_aux(aux)
    return big.drop_aux(fermionic_reduce(big, A, X))


def s_independence_gap(alg: FermionAlgebra, A: np.ndarray, X: Iterable,
                       aux_values: Sequence[int] = (1, 2)) -> float:
    """Largest entrywise difference of ``Γ_X[A]`` across auxiliary sizes."""
    if any(s < 1 for s in aux_values):
        raise ValidationError("S-independence only holds with at least one auxiliary mode")
    base = alg.with_aux(0)
    results = [fermionic_reduce_lattice(base, A, X, s) for s in aux_values]
    return max((float(np.max(np.abs(r - results[0]))) for r in results[1:]), default=0.0)


def even_haar_unitary(k: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random even unitary on ``k`` modes: independent blocks per parity sector."""
    p = _popcount_parity(k)
    U = np.zeros((2**k, 2**k), dtype=complex)
    for sgn in (1, -1):
        idx = np.nonzero(p == sgn)[0]
        U[np.ix_(idx, idx)] = haar_unitary(len(idx), rng)
    return U


def even_polar(k: int):
    """Closest even unitary to ``G`` for the trace pairing, computed blockwise."""
    p = _popcount_parity(k)
    blocks = [np.nonzero(p == s)[0] for s in (1, -1)]

    def project(G: np.ndarray) -> np.ndarray:
        U = np.zeros_like(G)
        for idx in blocks:
            u, _, vh = svd(G[np.ix_(idx, idx)])
            U[np.ix_(idx, idx)] = u @ vh
        return U

    return project


def fermionic_twirl_estimate(alg: FermionAlgebra, A: np.ndarray, X: Iterable,
                             samples: int, seed: int) -> np.ndarray:
    """Monte-Carlo average of ``U A U†`` over even Haar unitaries on ``X^c ∪ S``."""
    if samples < 1:
        raise ValidationError("need at least one sample")
    A = alg.lift(A)
    keep = alg.site_modes(X)
    T = [m for m in range(alg.n_modes) if m not in keep]
    fr = alg.frame(T)
    dt, dx = 2 ** len(T), 2 ** len(keep)
    m = fr.to_frame(A).reshape(dt, dx, dt, dx)
    rng = np.random.default_rng(seed)
    acc = np.zeros_like(m)
    for _ in range(samples):
        U = even_haar_unitary(len(T), rng)
        acc += np.einsum("ij,jakb,lk->ialb", U, m, U.conj())
    return fr.from_frame((acc / samples).reshape(dt * dx, dt * dx))


# ---- fermionic potentials ---------------------------------------------------

@dataclass
class FermionPotential:
    """Even Hermitian terms keyed by site sets, as matrices on the lattice modes."""

    algebra: FermionAlgebra
    terms: dict[SiteSet, np.ndarray] = field(default_factory=dict)
    declared_k: int | None = None

    def __post_init__(self):
        self.algebra = self.algebra.with_aux(0) if self.algebra.aux else self.algebra
        for X, m in list(self.terms.items()):
            self._check(X, m)

    @property
    def region(self) -> SiteSet:
        return self.algebra.region

    @property
    def registry_lattice(self) -> Lattice:
        return self.algebra.lattice

    def _check(self, X: SiteSet, m: np.ndarray, label: str = "") -> None:
        alg = self.algebra
        if m.shape != (alg.lattice_dim, alg.lattice_dim):
            raise ValidationError(f"{label}term on {X!r} has shape {m.shape}")
        if not X <= alg.region:
            raise ValidationError(f"{label}term support {X!r} lies outside the region")
        if not is_even(alg, m):
            raise ValidationError(f"{label}non-even term on {X!r}")
        if not is_hermitian(m):
            raise ValidationError(f"{label}term on {X!r} is not Hermitian")
        if self.declared_k is not None and len(X) > self.declared_k and op_norm(m) > ZERO_TERM_TOL:
            raise ValidationError(f"{label}{len(X)}-site term in a declared {self.declared_k}-body potential")

    def add(self, X: Iterable, m: np.ndarray) -> None:
        X = self.algebra.lattice.site_set(X)
        m = np.asarray(m, dtype=complex)
        new = self.terms[X] + m if X in self.terms else m
        self._check(X, new)
        self.terms[X] = new

    def norms(self) -> dict[SiteSet, float]:
        return {X: op_norm(m) for X, m in self.terms.items()}

    def hamiltonian(self) -> np.ndarray:
        alg = self.algebra
        H = np.zeros((alg.lattice_dim, alg.lattice_dim), dtype=complex)
        for m in self.terms.values():
            H += m
        return H


def fermionic_canonical_form(alg: FermionAlgebra, H: np.ndarray, max_size: int | None = None,
                             aux: int = 1) -> FermionPotential:
    """``Φ̂(Z) = Σ_{X ⊆ Z} (-1)^{|Z|-|X|} Γ_X[H]`` with the fermionic reduction."""
    base = alg.with_aux(0)
    H = np.asarray(H, dtype=complex)
    if H.shape != (base.lattice_dim, base.lattice_dim):
        raise ValidationError("Hamiltonian does not act on the lattice modes")
    if not is_hermitian(H) or not is_even(base, H):
        raise ValidationError("fermionic canonical form needs an even Hermitian Hamiltonian")
    lam = base.region
    m = len(lam) if max_size is None else int(max_size)
    gamma = {X: fermionic_reduce_lattice(base, H, X, aux) for X in subsets(lam, max_size=m)}
    phi = FermionPotential(base)
    for Z in subsets(lam, max_size=m):
        acc = np.zeros_like(H)
        for X in subsets(Z):
            acc += (-1.0 if (len(Z) - len(X)) % 2 else 1.0) * gamma[X]
        acc = (acc + acc.conj().T) / 2
        if op_norm(acc) >= ZERO_TERM_TOL:
            phi.terms[Z] = acc
    return phi


def fermionic_double_restriction(alg: FermionAlgebra, H: np.ndarray, x, y, aux: int = 1) -> np.ndarray:
    base = alg.with_aux(0)
    x, y = base.lattice.check_site(x), base.lattice.check_site(y)
    if x == y:
        raise ValidationError("double restriction needs two distinct sites")
    lam = base.region
    K = H - fermionic_reduce_lattice(base, H, lam - SiteSet([y]), aux)
    return K - fermionic_reduce_lattice(base, K, lam - SiteSet([x]), aux)


def fermionic_epsilon(alg: FermionAlgebra, H: np.ndarray, x, y, s1: int = 1, s2: int = 1,
                      seed=0, opts: AscentOptions | None = None) -> EpsilonEntry:
    """Interval for ``sup ‖[[H, A], B]‖`` over even unit ``A`` on ``{x} ∪ S1``, ``B`` on ``{y} ∪ S2``.

    The lower end is attained by explicit even unitaries.  The upper end
    expands A in the even Majorana basis ``S_i`` and uses
    ``‖[M, B]‖ ≤ 2 ‖M - C‖`` for the part ``C`` of ``M = [H, S_i]`` that
    the frame of ``{y} ∪ S2`` sees as the identity.
    """
    if s1 < 1 or s2 < 1:
        raise ValidationError("auxiliary systems S1 and S2 need at least one mode each")
    base = alg.with_aux(0)
    big = base.with_aux(s1 + s2)
    x, y = base.lattice.check_site(x), base.lattice.check_site(y)
    if x == y:
        raise ValidationError("epsilon needs two distinct sites")
    Hf = big.lift(H)
    modes_a = big.site_modes([x]) + big.aux_modes(range(1, s1 + 1))
    modes_b = big.site_modes([y]) + big.aux_modes(range(s1 + 1, s1 + s2 + 1))
    fa, fb = big.frame(modes_a), big.frame(modes_b)
    ka, kb = len(modes_a), len(modes_b)
    Hb = fb.to_frame(Hf)
    da = 2**ka
    F = np.empty((da, da, big.dim, big.dim), dtype=complex)
    for i in range(da):
        for j in range(da):
            E = np.zeros((da, da), dtype=complex)
            E[i, j] = 1
            Eb = fb.to_frame(fa.embed_local(E))
            F[i, j] = Hb @ Eb - Eb @ Hb
    frame_b = SpinFrame(list(range(kb)), 2, big.n_modes)
    obj = CommutatorObjective(F, frame_b)

    seeds_a = big.majorana_even_basis(ka)[1:]
    seeds_b = big.majorana_even_basis(kb)[1:]
    restricted = [top_singular(frame_b.complement_part(obj.f_of(S)))[0] for S in seeds_a]
    upper = 2.0 * math.sqrt(sum(r * r for r in restricted))
    dist = distance(base.lattice, x, y)
    if upper <= 1e-300:
        return EpsilonEntry(x, y, dist, 0.0, 0.0, 0.0, EXACT)
    rng = np.random.default_rng(seed)
    opts = opts or AscentOptions(iterations=40, restarts=2)
    res = maximize_commutator(
        obj, seeds_a, seeds_b, rng, opts,
        project_a=even_polar(ka), project_b=even_polar(kb),
        sample_a=lambda g: even_haar_unitary(ka, g), sample_b=lambda g: even_haar_unitary(kb, g),
    )
    lower = min(res.value, upper)
    return EpsilonEntry(x, y, dist, (lower + upper) / 2, lower, upper, EXACT)


def fermionic_certify(alg: FermionAlgebra, model: FermionPotential | np.ndarray, k: int | None,
                      s1: int = 1, s2: int = 1, seed: int = 0,
                      opts: AscentOptions | None = None) -> LocalityCertificate:
    """Converse certificate for a fermionic model, with the fermionic reduction map."""
    if k is None:
        raise ValidationError("certify needs the k-body promise k")
    base = alg.with_aux(0)
    if base.n_lattice_modes + s1 + s2 > base.mode_cap:
        raise ResourceCapError(
            f"{base.n_lattice_modes} lattice modes plus {s1 + s2} auxiliaries exceed the mode cap"
        )
    H = model.hamiltonian() if isinstance(model, FermionPotential) else np.asarray(model, dtype=complex)
    if not is_hermitian(H):
        raise ValidationError("fermionic Hamiltonian is not Hermitian")
    if not is_even(base, H):
        raise ValidationError("non-even Hamiltonian")
    mtab = mk_constant(k)
    lam = base.region
    if k > len(lam):
        raise ValidationError(f"k={k} exceeds the region size {len(lam)}")
    canon = fermionic_canonical_form(base, H, max_size=k)

    table = EpsilonTable()
    for i, (x, y) in enumerate(combinations(lam.sites, 2)):
        table[(x, y)] = fermionic_epsilon(base, H, x, y, s1, s2, seed=[seed, i], opts=opts)
    norms = canon.norms()
    entries = _assemble(norms, lam, base.lattice, k, lambda x, y: table[(x, y)].upper)

    checks = ProofChecks(checked=True)
    complete = k >= len(lam)
    for (x, y), e in table.items():
        DR = fermionic_double_restriction(base, H, x, y)
        checks.step2_excess = max(checks.step2_excess, op_norm(DR) - e.upper)
        if complete:
            acc = sum((m for Z, m in canon.terms.items() if x in Z and y in Z), np.zeros_like(H))
            checks.identity_error = max(checks.identity_error, float(np.max(np.abs(acc - DR))))
        for Z in subsets(lam, containing=SiteSet([x, y]), max_size=k):
            checks.step3_excess = max(checks.step3_excess,
                                      op_norm(fermionic_reduce_lattice(base, DR, Z)) - e.upper)
    try:
        decay, err = decay_fit_from_norms(norms, base.lattice, lam), None
    except ValidationError as exc:
        decay, err = None, str(exc)
    return LocalityCertificate(k, mtab, entries, table, decay, checks, canon, err)


# ---- JSON model format -------------------------------------------------------

_OPS = {"f": "a", "f-": "a", "c": "a", "f+": "c", "fdag": "c", "f†": "c", "c+": "c", "n": "n"}


def _mode_key(entry):
    if isinstance(entry, dict):
        return entry.get("site"), int(entry.get("j", 1))
    raise ValidationError(f"mode entry must be an object with 'site' and 'j', got {entry!r}")


def fermion_model_from_json(data: dict, mode_cap: int = MODE_CAP) -> tuple[FermionAlgebra, FermionPotential]:
    """Parse ``{"modes": [{"site": 0, "j": 1}, ...], "terms": [...]}``.

    Each term is a product of ``[op, mode]`` factors times ``coeff``, with
    ``op`` one of ``"f"``, ``"f+"``, ``"n"`` and ``mode`` an index into the
    ``modes`` list (or a ``{"site": ..., "j": ...}`` object).  ``"hc": true``
    adds the Hermitian conjugate.  Terms are summed per set of sites they
    touch; every term must be even and every summed term Hermitian.
    """
    if not isinstance(data, dict):
        raise ValidationError("fermionic model must be a JSON object")
    listed = data.get("modes")
    if not isinstance(listed, list) or not listed:
        raise ValidationError("fermionic model needs a nonempty 'modes' list")
    keys = [_mode_key(m) for m in listed]
    if len(set((str(s), j) for s, j in keys)) != len(keys):
        raise ValidationError("duplicate modes")
    if "lattice" in data:
        lattice = Lattice.from_json(data["lattice"])
    else:
        coords = [s if isinstance(s, int) else None for s, _ in keys]
        if any(c is None for c in coords):
            raise ValidationError("non-integer sites need an explicit 'lattice'")
        lattice = Lattice.chain(max(coords) + 1)
    sites = [lattice.check_site(s) for s, _ in keys]
    region = SiteSet(sites)
    per_site = {s: sorted(j for t, j in zip(sites, (k[1] for k in keys)) if t == s) for s in region}
    d = len(next(iter(per_site.values())))
    if any(js != list(range(1, d + 1)) for js in per_site.values()):
        raise ValidationError("every site needs modes j = 1..d with the same d")
    alg = FermionAlgebra(lattice, d, 0, region, mode_cap)
    phi = FermionPotential(alg, declared_k=data.get("k"))

    def resolve(ref) -> int:
        if isinstance(ref, bool):
            raise ValidationError(f"bad mode reference {ref!r}")
        if isinstance(ref, int):
            if not 0 <= ref < len(keys):
                raise ValidationError(f"mode index {ref} out of range")
            s, j = sites[ref], keys[ref][1]
        elif isinstance(ref, dict):
            s, j = lattice.check_site(ref.get("site")), int(ref.get("j", 1))
        else:
            raise ValidationError(f"bad mode reference {ref!r}")
        return alg.mode(s, j)

    mode_site = {alg.mode(s, j): s for s in region for j in range(1, d + 1)}
    for i, term in enumerate(data.get("terms", [])):
        if not isinstance(term, dict) or "monomials" not in term:
            raise ValidationError(f"term {i} needs 'monomials'")
        mat = np.eye(alg.dim, dtype=complex)
        touched = set()
        for factor in term["monomials"]:
            if not isinstance(factor, (list, tuple)) or len(factor) != 2:
                raise ValidationError(f"term {i}: factor must be [op, mode], got {factor!r}")
            op, ref = factor
            kind = _OPS.get(str(op))
            if kind is None:
                raise ValidationError(f"term {i}: unknown operator {op!r}")
            m = resolve(ref)
            touched.add(mode_site[m])
            local = {"a": alg.annihilator(m), "c": alg.creator(m), "n": alg.number(m)}[kind]
            mat = mat @ local
        mat = _complex(term.get("coeff", 1.0)) * mat
        if term.get("hc"):
            mat = mat + mat.conj().T
        if not is_even(alg, mat):
            raise ValidationError(f"term {i}: non-even term")
        X = SiteSet(touched)
        new = phi.terms[X] + mat if X in phi.terms else mat
        phi.terms[X] = new
    for X, m in phi.terms.items():
        phi._check(X, m)
    return alg, phi
