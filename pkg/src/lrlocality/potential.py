"""Interaction potentials, Hamiltonian assembly and the canonical form.

The canonical form of a Hamiltonian ``H`` on Λ is obtained by Möbius
inversion over the subset lattice,

    Φ̂(Z) = Σ_{X ⊆ Z} (-1)^{|Z|-|X|} Γ_X[H],

which reproduces ``H``, is annihilated by every reduction that does not
contain its support, and is k-body whenever ``H`` has a k-body potential.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from math import comb
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .errors import ResourceCapError, ValidationError
from .lattice import Lattice, SiteSet, diameter, subsets
from .operators import (
    LatticeOperator,
    _permute_factors,
    SiteRegistry,
    embed,
    is_hermitian,
    op_norm,
    reduce,
    weyl_basis,
)

#: Terms whose norm falls below this are treated as exact cancellations.
ZERO_TERM_TOL = 1e-12
CANONICAL_TOL = 1e-10
#: Upper limit on matrix entries touched by one canonical_form call.
CANONICAL_WORK_CAP = 2 * 10**8


@dataclass
class Potential:
    """Map from site sets to Hermitian operators supported on those sets."""

    registry: SiteRegistry
    terms: dict[SiteSet, LatticeOperator] = field(default_factory=dict)
    declared_k: int | None = None

    def __post_init__(self):
        for X, op in self.terms.items():
            self._check_term(X, op)

    def _check_term(self, X: SiteSet, op: LatticeOperator) -> None:
        if op.support != X:
            raise ValidationError(f"term keyed by {X!r} is supported on {op.support!r}")
        if not X <= self.registry.region:
            raise ValidationError(f"term support {X!r} lies outside the region")
        if not op.is_hermitian():
            raise ValidationError(f"term on {X!r} is not Hermitian")
        if self.declared_k is not None and len(X) > self.declared_k and op_norm(op) > ZERO_TERM_TOL:
            raise ValidationError(f"{len(X)}-site term in a declared {self.declared_k}-body potential")

    @property
    def region(self) -> SiteSet:
        return self.registry.region

    def add(self, op: LatticeOperator) -> None:
        """Accumulate ``op`` into the term keyed by its support."""
        X = op.support
        new = self.terms[X] + op if X in self.terms else op
        self._check_term(X, new)
        self.terms[X] = new

    def __getitem__(self, X) -> LatticeOperator:
        X = SiteSet(X)
        if X in self.terms:
            return self.terms[X]
        return self.registry.zero(X)

    def norms(self) -> dict[SiteSet, float]:
        return {X: op_norm(op) for X, op in self.terms.items()}

    def body(self) -> int:
        """Largest support size carrying a nonzero term (0 if empty)."""
        live = [len(X) for X, n in self.norms().items() if n > ZERO_TERM_TOL]
        return max(live, default=0)


def hamiltonian(phi: Potential) -> LatticeOperator:
    reg = phi.registry
    acc = np.zeros((reg.dim(), reg.dim()), dtype=complex)
    for op in phi.terms.values():
        acc += embed(op, reg.region).matrix
    return LatticeOperator(reg.region, acc, reg)


def _canonical_cost(n: int, m: int, d: int) -> int:
    return sum(comb(n, j) * 2**j * d ** (2 * j) for j in range(m + 1))


def canonical_form(H: LatticeOperator, region: Iterable | SiteSet | None = None,
                   max_size: int | None = None) -> Potential:
    """Canonical potential Φ̂ of ``H`` on all sets with at most ``max_size`` sites.

    Γ_X[H] is computed once per set and reused; the reduction of a set is
    obtained from that of a one-site-larger superset, so the expensive full
    partial traces are only taken at the top level.
    """
    reg = H.registry
    lam = reg.region if region is None else reg.site_set(region)
    if not is_hermitian(H.matrix):
        raise ValidationError("canonical form needs a Hermitian operator")
    m = len(lam) if max_size is None else int(max_size)
    if not 0 <= m <= len(lam):
        raise ValidationError(f"max_size must lie in [0, {len(lam)}]")
    if _canonical_cost(len(lam), m, reg.site_dim) > CANONICAL_WORK_CAP:
        raise ResourceCapError(
            f"canonical form on {len(lam)} sites up to size {m} exceeds the work cap"
        )
    H = embed(H, lam) if H.support != lam else H

    gamma: dict[SiteSet, LatticeOperator] = {}
    for X in subsets(lam, max_size=m):
        if len(X) == m:
            gamma[X] = reduce(H, X)
    for size in range(m - 1, -1, -1):
        for X in subsets(lam, max_size=size):
            if len(X) != size or X in gamma:
                continue
            parent = next(X | SiteSet([z]) for z in lam if z not in X)
            gamma[X] = reduce(gamma[parent], X)

    phi = Potential(reg)
    for Z in subsets(lam, max_size=m):
        acc = np.zeros((reg.dim(Z), reg.dim(Z)), dtype=complex)
        for X in subsets(Z):
            sign = -1.0 if (len(Z) - len(X)) % 2 else 1.0
            acc += sign * embed(gamma[X], Z).matrix
        acc = (acc + acc.conj().T) / 2
        term = LatticeOperator(Z, acc, reg)
        if op_norm(term) >= ZERO_TERM_TOL:
            phi.terms[Z] = term
    return phi


class CanonicalCheck(NamedTuple):
    ok: bool
    X: SiteSet | None = None
    Y: SiteSet | None = None
    norm: float = 0.0

    def __bool__(self) -> bool:
        return self.ok


def is_canonical(phi: Potential, tol: float = CANONICAL_TOL) -> CanonicalCheck:
    """Check Γ_X[Φ(Y)] = 0 for all X not containing Y.

    Γ_X[Φ(Y)] only depends on ``X ∩ Y``, so it suffices to test the proper
    subsets of each term's support; the witness ``X`` returned is that
    intersection.
    """
    for Y in sorted(phi.terms):
        op = phi.terms[Y]
        for W in subsets(Y, proper=True):
            n = op_norm(reduce(op, W))
            if n > tol:
                return CanonicalCheck(False, W, Y, n)
    return CanonicalCheck(True)


@dataclass
class DecayFit:
    """Summary of how term norms fall off with the diameter of their support.

    ``K`` and ``a`` describe the envelope ``K exp(-a diam)``; the intercept
    is raised after the least-squares fit so the envelope dominates every
    term.  ``exponent`` is the power-law slope from the log-log fit.
    """

    classification: str
    K: float | None = None
    a: float | None = None
    residual: float = 0.0
    exponent: float | None = None
    range: int | None = None
    envelope: dict[int, float] = field(default_factory=dict)
    outliers: list[int] = field(default_factory=list)

    def to_json(self) -> dict:
        opt = lambda v: None if v is None else _round(v)  # noqa: E731
        return {
            "classification": self.classification,
            "K": opt(self.K),
            "a": opt(self.a),
            "residual": _round(self.residual),
            "exponent": opt(self.exponent),
            "range": self.range,
            "envelope": {str(k): _round(v) for k, v in sorted(self.envelope.items())},
            "outliers": list(self.outliers),
        }


def _linfit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    A = np.vstack([np.ones_like(x), x]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(res**2)))


def decay_fit_from_norms(norms: Mapping[SiteSet, float], lattice: Lattice,
                         region: SiteSet, tol: float = ZERO_TERM_TOL) -> DecayFit:
    """Fit the per-diameter maximum of ``norms`` over sets with at least two sites."""
    envelope: dict[int, float] = {}
    for X, n in norms.items():
        if len(X) < 2:
            continue
        d, _ = diameter(lattice, X)
        envelope[d] = max(envelope.get(d, 0.0), float(n))
    live = {d: n for d, n in envelope.items() if n > tol}
    full_diam = diameter(lattice, region)[0] if len(region) else 0
    R = max(live, default=0)
    local = R < full_diam or not live

    outliers = []
    if live:
        first = min(live)
        outliers = [d for d in sorted(live) if d > first and live[d] > envelope.get(d - 1, 0.0)]

    fit = DecayFit(classification=f"strictly-local({R})" if local else "none",
                   range=R, envelope=dict(sorted(envelope.items())), outliers=outliers)
    if len(live) < 2:
        if not local:
            raise ValidationError("decay fit needs terms at two distinct diameters")
        return fit

    ds = np.array(sorted(live), dtype=float)
    logn = np.log([live[int(d)] for d in ds])
    c0, slope, res_exp = _linfit(ds, logn)
    p0, pslope, res_pow = _linfit(np.log(ds), logn)
    # shift the intercept so that K exp(-a d) bounds every term
    lift = max(0.0, float(np.max(logn - (c0 + slope * ds))))
    fit.K = math.exp(c0 + lift)
    fit.a = -slope
    fit.exponent = -pslope
    if not local:
        if res_pow < res_exp - 1e-9:
            fit.classification, fit.residual = "power-law", res_pow
        elif slope < 0:
            fit.classification, fit.residual = "exponential", res_exp
        else:
            fit.classification, fit.residual = "none", res_exp
    else:
        fit.residual = res_exp
    return fit


def decay_fit(phi: Potential) -> DecayFit:
    return decay_fit_from_norms(phi.norms(), phi.registry.lattice, phi.region)


@dataclass
class PrefactorReport:
    n_sites: int
    site_dim: int
    n_coefficients: int
    prefactor: int
    operator_norm: float
    coefficient_l1: float
    triangle_ratio: float

    @property
    def ratio_to_prefactor(self) -> float:
        return self.triangle_ratio / self.prefactor


def basis_expansion_prefactor_demo(n_sites: int, d: int = 2, seed: int = 0) -> PrefactorReport:
    """Expand a random norm-one operator in the product unitary basis.

    The triangle inequality over the expansion bounds the norm by the sum
    of coefficient magnitudes; comparing that sum with the true norm shows
    how much a single-site-to-arbitrary-support argument loses, against the
    worst case ``d^(2 n_sites)``.
    """
    if not 1 <= n_sites <= 4:
        raise ValidationError("demo supports 1 to 4 sites")
    rng = np.random.default_rng(seed)
    dim = d**n_sites
    A = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    A /= np.linalg.norm(A, 2)
    basis = weyl_basis(d, n_sites)
    coeffs = np.array([np.trace(S.conj().T @ A) / dim for S in basis])
    recon = sum(c * S for c, S in zip(coeffs, basis))
    assert np.allclose(recon, A, atol=1e-10)
    l1 = float(np.sum(np.abs(coeffs)))
    return PrefactorReport(
        n_sites=n_sites,
        site_dim=d,
        n_coefficients=len(basis),
        prefactor=d ** (2 * n_sites),
        operator_norm=float(np.linalg.norm(A, 2)),
        coefficient_l1=l1,
        triangle_ratio=l1 / float(np.linalg.norm(A, 2)),
    )


# ---- JSON model format -----------------------------------------------------

def _complex(v) -> complex:
    if isinstance(v, dict):
        return complex(float(v.get("re", 0.0)), float(v.get("im", 0.0)))
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ValidationError(f"complex entry must be [re, im], got {v!r}")
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    raise ValidationError(f"not a number: {v!r}")


def _round(x: float) -> float:
    return float(f"{x:.12g}")


def potential_from_json(data: dict, dim_cap: int | None = None) -> Potential:
    """Build a potential from the JSON model format.

    ``{"lattice": {"lengths": [n], "periodic": [false]}, "site_dim": 2,
    "terms": [{"sites": [0, 1], "pauli": "ZZ", "coeff": 1.0},
    {"sites": [0], "matrix": [[[re, im], ...], ...]}]}``.  Terms sharing a
    support are summed.  An optional ``"region"`` site list restricts Λ.
    """
    if not isinstance(data, dict):
        raise ValidationError("model must be a JSON object")
    try:
        lattice = Lattice.from_json(data["lattice"])
    except KeyError:
        raise ValidationError("model needs a 'lattice' entry") from None
    d = int(data.get("site_dim", 2))
    region = lattice.site_set(data["region"]) if "region" in data else lattice.sites()
    kw = {} if dim_cap is None else {"dim_cap": dim_cap}
    reg = SiteRegistry(lattice, d, region, **kw)
    phi = Potential(reg, declared_k=data.get("k"))
    for i, term in enumerate(data.get("terms", [])):
        try:
            sites = term["sites"]
        except (KeyError, TypeError):
            raise ValidationError(f"term {i} has no 'sites'") from None
        coeff = _complex(term.get("coeff", 1.0))
        if "pauli" in term:
            op = reg.pauli(term["pauli"], sites, coeff)
        elif "matrix" in term:
            rows = term["matrix"]
            try:
                mat = np.array([[_complex(v) for v in row] for row in rows], dtype=complex)
            except TypeError:
                raise ValidationError(f"term {i}: matrix must be a list of rows") from None
            # matrix factors follow the listed site order
            listed = [lattice.check_site(s) for s in sites]
            X = reg.site_set(listed)
            if mat.shape != (reg.dim(X), reg.dim(X)):
                raise ValidationError(f"term {i}: matrix shape {mat.shape} does not fit {len(X)} sites")
            perm = [listed.index(s) for s in X]
            op = LatticeOperator(X, coeff * _permute_factors(mat, d, perm), reg)
        else:
            raise ValidationError(f"term {i} needs 'pauli' or 'matrix'")
        try:
            phi.add(op)
        except ValidationError as exc:
            raise ValidationError(f"term {i}: {exc}") from None
    for X, op in phi.terms.items():
        if not op.is_hermitian():
            raise ValidationError(f"combined term on {X!r} is not Hermitian")
    return phi


def potential_to_json(phi: Potential, decay: DecayFit | None = None) -> dict:
    reg = phi.registry
    terms = []
    for X in sorted(phi.terms):
        m = phi.terms[X].matrix
        terms.append({
            "sites": X.to_json(),
            "norm": _round(op_norm(phi.terms[X])),
            "matrix": [[[_round(z.real), _round(z.imag)] for z in row] for row in m],
        })
    out = {
        "lattice": reg.lattice.to_json(),
        "site_dim": reg.site_dim,
        "region": reg.region.to_json(),
        "terms": terms,
    }
    if decay is not None:
        out["decay"] = decay.to_json()
    return out


def load_potential(path, dim_cap: int | None = None) -> Potential:
    with open(path, encoding="utf-8") as fh:
        return potential_from_json(json.load(fh), dim_cap=dim_cap)
