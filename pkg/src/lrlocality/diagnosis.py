"""From short-time commutator slopes to certified bounds on interaction terms.

For sites ``x != y`` the slope ``ε_{x,y} = sup ‖[[H, A], B]‖`` over unit
single-site ``A`` at x and ``B`` at y controls the double restriction

    DR_{x,y} = (1 - Γ_{x^c})(1 - Γ_{y^c}) H = Σ_{Z ∋ x, y} Φ̂(Z),

and peeling off proper subsets gives ``‖Φ̂(Z)‖ ≤ b(|Z|) ε_{x,y}`` for any
pair in ``Z``, with ``b`` from :func:`mk_constant`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, NamedTuple

import numpy as np

from .dynamics import (
    Propagator,
    _evolved_units,
    _frame,
    _growth,
    _haar_sampler,
    double_commutator_units,
)
from .errors import ValidationError
from .lattice import Site, SiteSet, diameter, distance, subsets
from .operators import LatticeOperator, embed, op_norm, reduce, weyl_basis
from .optimize import (
    AscentOptions,
    CommutatorObjective,
    SpinFrame,
    maximize_commutator,
    top_singular,
)
from .potential import DecayFit, Potential, _round, canonical_form, decay_fit, hamiltonian

EXACT = "exact-double-commutator"
FINITE_DIFF = "finite-difference"
MODES = {"exact": EXACT, EXACT: EXACT, "finite-diff": FINITE_DIFF, FINITE_DIFF: FINITE_DIFF}

#: Time steps for the finite-difference slope, halving each time.
FD_STEPS = (1e-2, 5e-3, 2.5e-3)
PASS_TOL = 1e-9
MAX_K = 12


@dataclass
class EpsilonEntry:
    x: Site
    y: Site
    distance: int
    epsilon: float
    lower: float
    upper: float
    method: str
    delta_t: float | None = None

    def to_json(self) -> dict:
        site = lambda s: s[0] if len(s) == 1 else list(s)  # noqa: E731
        return {
            "x": site(self.x), "y": site(self.y), "distance": self.distance,
            "epsilon": _round(self.epsilon), "lower": _round(self.lower),
            "upper": _round(self.upper), "method": self.method,
            "delta_t": self.delta_t,
        }


class EpsilonTable(dict):
    """``(x, y) -> EpsilonEntry`` with symmetric lookup."""

    def __getitem__(self, key):
        x, y = key
        if (x, y) in self.keys():
            return super().__getitem__((x, y))
        return super().__getitem__((y, x))

    def __contains__(self, key):
        x, y = key
        return dict.__contains__(self, (x, y)) or dict.__contains__(self, (y, x))


def _as_hamiltonian(model) -> LatticeOperator:
    if isinstance(model, Propagator):
        return model.H
    if isinstance(model, Potential):
        return hamiltonian(model)
    if isinstance(model, LatticeOperator):
        return embed(model, model.registry.region)
    raise ValidationError(f"expected a Potential, Propagator or LatticeOperator, got {type(model).__name__}")


def _complement_reduce(H: LatticeOperator, y: Site) -> LatticeOperator:
    """``(1 - Γ_{y^c}) H`` on the full region."""
    reg = H.registry
    rest = reg.region - SiteSet([y])
    return H - embed(reduce(H, rest), reg.region)


def double_restriction(H: LatticeOperator, x, y) -> LatticeOperator:
    """``(1 - Γ_{x^c})(1 - Γ_{y^c}) H``, the part of ``H`` touching both sites."""
    reg = H.registry
    x, y = reg.lattice.check_site(x), reg.lattice.check_site(y)
    if x == y:
        raise ValidationError("double restriction needs two distinct sites")
    reg.site_set([x, y])
    H = embed(H, reg.region)
    return _complement_reduce(_complement_reduce(H, y), x)


class SlopeBounds(NamedTuple):
    lower: float
    upper: float
    restriction: float


def _slope_bounds(H: LatticeOperator, x: Site, y: Site) -> SlopeBounds:
    """Optimizer-free bounds on ``sup ‖[[H, A], B]‖``.

    ``K = (1 - Γ_{y^c}) H`` gives ``[[H, A], B] = [[K, A], B]``.  Both the
    double restriction ``‖DR‖`` and every ``‖[K, S_i]‖`` for unitary basis
    elements ``S_i`` at x are attained or dominated by the supremum; the
    upper side uses ``‖[[DR, A], B]‖ ≤ 4 ‖DR‖`` and the basis expansion of A.
    """
    reg = H.registry
    K = _complement_reduce(H, y)
    DR = _complement_reduce(K, x)
    fx = SpinFrame([reg.region.index(x)], reg.site_dim, len(reg.region))
    comm = [top_singular(fx.right(K.matrix, S) - fx.left(S, K.matrix))[0]
            for S in weyl_basis(reg.site_dim, 1)[1:]]
    dr = op_norm(DR)
    lower = max(dr, max(comm))
    upper = min(4.0 * dr, 2.0 * math.sqrt(sum(c * c for c in comm)))
    return SlopeBounds(lower, max(upper, lower), dr)


def _richardson(values: list[float]) -> float:
    # first order removes the O(δt) term of C(δt)/δt, the second the O(δt²) one
    r1 = [2 * values[i + 1] - values[i] for i in range(len(values) - 1)]
    if len(r1) == 1:
        return r1[0]
    return (4 * r1[1] - r1[0]) / 3


def epsilon_estimate(model, x, y, mode: str = "exact", seed: int | list[int] = 0,
                     opts: AscentOptions | None = None) -> EpsilonEntry:
    """Slope ``ε_{x,y}`` of the commutator growth between sites x and y.

    ``mode="exact"`` maximizes ``‖[[H, A], B]‖`` directly and returns a
    certified interval whose midpoint is ``epsilon``.  ``mode="finite-diff"``
    measures ``C_{x,y}(δt)/δt`` at the steps in ``FD_STEPS`` and
    extrapolates both ends of the interval to ``δt -> 0``; the result is an
    estimate, not a certificate.
    """
    try:
        method = MODES[mode]
    except KeyError:
        raise ValidationError(f"unknown epsilon mode {mode!r}") from None
    P = model if isinstance(model, Propagator) else None
    H = _as_hamiltonian(model)
    reg = H.registry
    x, y = reg.lattice.check_site(x), reg.lattice.check_site(y)
    if x == y:
        raise ValidationError("epsilon needs two distinct sites")
    X, Y = reg.site_set([x]), reg.site_set([y])
    opts = opts or AscentOptions()
    rng = np.random.default_rng(seed)
    dist = distance(reg.lattice, x, y)

    if method == EXACT:
        sb = _slope_bounds(H, x, y)
        if sb.upper <= 1e-300:
            return EpsilonEntry(x, y, dist, 0.0, 0.0, 0.0, method)
        holder = _HOnly(H)
        obj = CommutatorObjective(double_commutator_units(holder, X), _frame(holder, Y))
        basis = weyl_basis(reg.site_dim, 1)[1:]
        sample = _haar_sampler(reg.site_dim)
        res = maximize_commutator(obj, basis, basis, rng, opts, sample_a=sample, sample_b=sample)
        lower = min(max(res.value, sb.lower), sb.upper)
        return EpsilonEntry(x, y, dist, (lower + sb.upper) / 2, lower, sb.upper, method)

    P = P or Propagator(H)
    lows, ups = [], []
    for dt in FD_STEPS:
        d = _growth(P, X, Y, _evolved_units(P, X, dt), opts, rng)
        lows.append(d.lower / dt)
        ups.append(d.upper / dt)
    lo = max(0.0, _richardson(lows))
    hi = max(lo, _richardson(ups))
    return EpsilonEntry(x, y, dist, (lo + hi) / 2, lo, hi, method, FD_STEPS[-1])


class _HOnly:
    """Minimal stand-in for a propagator when only ``H`` is needed."""

    def __init__(self, H: LatticeOperator):
        self.H = H
        self.registry = H.registry

    def positions(self, X: SiteSet) -> list[int]:
        return [self.registry.region.index(s) for s in X]


def epsilon_table(model, mode: str = "exact", seed: int = 0, opts: AscentOptions | None = None,
                  pairs=None) -> EpsilonTable:
    H = _as_hamiltonian(model)
    reg = H.registry
    model = model if isinstance(model, Propagator) else H
    if mode in ("finite-diff", FINITE_DIFF) and not isinstance(model, Propagator):
        model = Propagator(H)
    if pairs is None:
        pairs = list(combinations(reg.region.sites, 2))
    table = EpsilonTable()
    for i, (x, y) in enumerate(pairs):
        table[(x, y)] = epsilon_estimate(model, x, y, mode, seed=[seed, i], opts=opts)
    return table


# ---- the m_k recursion -----------------------------------------------------

def mk_constant(k: int) -> dict[int, int]:
    """``b(m)`` for ``2 <= m <= k``: ``b(2) = 1`` and
    ``b(m) = 1 + Σ_{j=2}^{m-1} C(m-2, j-2) b(j)``.

    ``b(m)`` bounds ``‖Φ̂(Z)‖ / ε_{x,y}`` for ``|Z| = m`` and any ``x, y ∈ Z``:
    the restriction of ``DR_{x,y}`` to Z contributes one ε, and each proper
    subset of Z containing x and y contributes its own bound.
    """
    if not isinstance(k, (int, np.integer)) or k < 2:
        raise ValidationError(f"k must be an integer >= 2, got {k!r}")
    if k > MAX_K:
        raise ValidationError(f"k must be at most {MAX_K}")
    b = {2: 1}
    for m in range(3, k + 1):
        b[m] = 1 + sum(math.comb(m - 2, j - 2) * b[j] for j in range(2, m))
    return b


# ---- certificates ----------------------------------------------------------

@dataclass
class CertificateEntry:
    Z: SiteSet
    norm: float
    bound: float
    pair: tuple[Site, Site]
    passed: bool

    def to_json(self) -> dict:
        site = lambda s: s[0] if len(s) == 1 else list(s)  # noqa: E731
        return {"sites": self.Z.to_json(), "norm": _round(self.norm), "bound": _round(self.bound),
                "pair": [site(self.pair[0]), site(self.pair[1])], "pass": self.passed}


@dataclass
class ProofChecks:
    """Worst-case slack of the intermediate inequalities (``≤ 0`` means they hold)."""

    identity_error: float = 0.0
    step2_excess: float = -math.inf
    step3_excess: float = -math.inf
    checked: bool = False

    @property
    def ok(self) -> bool:
        return (not self.checked) or (self.identity_error <= 1e-10 and self.step2_excess <= PASS_TOL
                                      and self.step3_excess <= PASS_TOL)

    def to_json(self) -> dict:
        f = lambda v: None if not math.isfinite(v) else _round(v)  # noqa: E731
        return {"checked": self.checked, "identity_error": f(self.identity_error),
                "step2_excess": f(self.step2_excess), "step3_excess": f(self.step3_excess),
                "ok": self.ok}


@dataclass
class LocalityCertificate:
    k: int
    m_table: dict[int, int]
    entries: list[CertificateEntry]
    epsilon: EpsilonTable
    decay: DecayFit | None
    checks: ProofChecks = field(default_factory=ProofChecks)
    canonical: Potential | None = None
    decay_error: str | None = None

    @property
    def valid(self) -> bool:
        return all(e.passed for e in self.entries) and self.checks.ok

    def failures(self) -> list[CertificateEntry]:
        return [e for e in self.entries if not e.passed]

    def entry(self, Z) -> CertificateEntry:
        Z = SiteSet(Z)
        for e in self.entries:
            if e.Z == Z:
                return e
        raise KeyError(Z)

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "m_table": {str(m): b for m, b in sorted(self.m_table.items())},
            "entries": [e.to_json() for e in self.entries],
            "epsilon": [e.to_json() for e in self.epsilon.values()],
            "decay": None if self.decay is None else self.decay.to_json(),
            "decay_error": self.decay_error,
            "checks": self.checks.to_json(),
            "valid": self.valid,
        }


def _pair_slopes(table: EpsilonTable | None, h_slope: Mapping[int, float] | None,
                 x: Site, y: Site, lattice) -> float:
    if h_slope is not None:
        dist = distance(lattice, x, y)
        try:
            return float(h_slope[dist])
        except KeyError:
            raise ValidationError(f"no slope supplied for distance {dist}") from None
    return table[(x, y)].upper


def _assemble(canon_norms: Mapping[SiteSet, float], region: SiteSet, lattice, k: int,
              slope) -> list[CertificateEntry]:
    b = mk_constant(k)
    entries = []
    for Z in subsets(region, max_size=k):
        if len(Z) < 2:
            continue
        _, pair = diameter(lattice, Z)
        bound = b[len(Z)] * slope(*pair)
        n = float(canon_norms.get(Z, 0.0))
        entries.append(CertificateEntry(Z, n, bound, pair, n <= bound + PASS_TOL))
    return entries


def _decay_or_none(phi: Potential) -> tuple[DecayFit | None, str | None]:
    try:
        return decay_fit(phi), None
    except ValidationError as exc:
        return None, str(exc)


def certify(model, k: int | None, h_slope: Mapping[int, float] | None = None,
            mode: str = "exact", seed: int = 0, opts: AscentOptions | None = None,
            check_steps: bool = True) -> LocalityCertificate:
    """Certify ``‖Φ̂(Z)‖ ≤ b(|Z|) ε_{x*,y*}`` for every ``2 <= |Z| <= k``.

    ``(x*, y*)`` realizes the diameter of Z.  ε is the supplied slope
    ``h_slope[distance]`` if given, otherwise the upper end of the measured
    interval.  With exact ε the intermediate inequalities ``‖DR_{x,y}‖ ≤ ε``
    and ``‖Γ_Z DR_{x,y}‖ ≤ ε`` and the identity ``DR = Σ_{Z ∋ x,y} Φ̂(Z)``
    are checked as well; a violation invalidates the certificate.

    Parameters
    ----------
    k : int
        The k-body promise.  Required: the bound constant depends on it and
        it is not inferred.
    """
    if k is None:
        raise ValidationError("certify needs the k-body promise k")
    H = _as_hamiltonian(model)
    reg = H.registry
    mtab = mk_constant(k)
    if k > len(reg.region):
        raise ValidationError(f"k={k} exceeds the region size {len(reg.region)}")
    canon = canonical_form(H, max_size=k)
    table = EpsilonTable()
    if h_slope is None:
        table = epsilon_table(model, mode, seed, opts)
    norms = canon.norms()
    entries = _assemble(norms, reg.region, reg.lattice, k,
                        lambda x, y: _pair_slopes(table, h_slope, x, y, reg.lattice))

    checks = ProofChecks()
    if check_steps and h_slope is None and MODES[mode] == EXACT:
        checks = _proof_checks(H, canon, table, k)
    decay, err = _decay_or_none(canon)
    return LocalityCertificate(k, mtab, entries, table, decay, checks, canon, err)


def _proof_checks(H: LatticeOperator, canon: Potential, table: EpsilonTable, k: int) -> ProofChecks:
    reg = H.registry
    checks = ProofChecks(identity_error=0.0, step2_excess=-math.inf, step3_excess=-math.inf,
                         checked=True)
    full = reg.region
    complete = k >= len(full)
    for (x, y), entry in table.items():
        DR = double_restriction(H, x, y)
        eps = entry.upper
        checks.step2_excess = max(checks.step2_excess, op_norm(DR) - eps)
        if complete:
            acc = np.zeros_like(DR.matrix)
            for Z, op in canon.terms.items():
                if x in Z and y in Z:
                    acc += embed(op, full).matrix
            checks.identity_error = max(checks.identity_error, float(np.max(np.abs(acc - DR.matrix))))
        for Z in subsets(full, containing=SiteSet([x, y]), max_size=k):
            checks.step3_excess = max(checks.step3_excess, op_norm(reduce(DR, Z)) - eps)
    return checks


def detect_long_range(model, threshold: float, min_distance: int = 1, seed: int = 0,
                      opts: AscentOptions | None = None) -> list[tuple[Site, Site, float]]:
    """Pairs whose slope lower bound exceeds ``threshold``, largest first.

    Uses the attained (lower) end of the exact interval, so every flagged
    pair provably couples.  ``min_distance`` hides pairs closer than that,
    e.g. ``2`` to look only beyond nearest neighbours.
    """
    H = _as_hamiltonian(model)
    reg = H.registry
    pairs = [(x, y) for x, y in combinations(reg.region.sites, 2)
             if distance(reg.lattice, x, y) >= min_distance]
    opts = opts or AscentOptions(iterations=100, restarts=2)
    table = epsilon_table(H, "exact", seed, opts, pairs=pairs)
    flagged = [(e.x, e.y, e.lower) for e in table.values() if e.lower > threshold]
    flagged.sort(key=lambda r: (-r[2], r[0], r[1]))
    return flagged
