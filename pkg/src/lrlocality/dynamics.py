"""Exact Heisenberg dynamics and commutator growth between lattice regions.

``C_{X,Y}(t) = sup ‖[τ_t(A), B]‖ / (‖A‖‖B‖)`` over A on X and B on Y is
reported as a certified interval ``(lower, upper)``:

* ``lower`` is attained by explicit unitaries (Pauli/Weyl seeds refined
  by alternating ascent), and is also at least
  ``max_i ‖(1 - Γ_{Y^c}) τ_t(S_i)‖`` over the seed basis on X, since a
  commutator with everything on Y controls the distance to Γ_{Y^c};
* ``upper`` uses ``[τ_t(A), B] = [(1 - Γ_{Y^c}) τ_t(A), B]`` and an
  orthonormal unitary basis ``S_i`` of the operators on X:
  ``‖(1 - Γ_{Y^c}) τ_t(A)‖ ≤ ‖A‖ (Σ_i ‖(1 - Γ_{Y^c}) τ_t(S_i)‖²)^{1/2}``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import ValidationError
from .lattice import Lattice, Site, SiteSet, distance, set_distance
from .operators import LatticeOperator, embed, is_hermitian, weyl_basis
from .optimize import (
    AscentOptions,
    CommutatorObjective,
    SpinFrame,
    maximize_commutator,
    spectral_norm,
    top_singular,
)
from .potential import Potential, hamiltonian

_PAULIS = [np.array([[0, 1], [1, 0]], dtype=complex),
           np.array([[0, -1j], [1j, 0]]),
           np.array([[1, 0], [0, -1]], dtype=complex)]
# eigenbases of X, Y, Z as columns
_PAULI_BASES = [np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2),
                np.array([[1, 1], [1j, -1j]]) / math.sqrt(2),
                np.eye(2, dtype=complex)]


class Propagator:
    """Eigendecomposition of ``H`` on the full region, used for ``τ_t``."""

    def __init__(self, H: LatticeOperator):
        reg = H.registry
        H = embed(H, reg.region)
        if not is_hermitian(H.matrix):
            raise ValidationError("propagator needs a Hermitian Hamiltonian")
        self.H = H
        self.registry = reg
        self.eigenvalues, self.eigenvectors = np.linalg.eigh((H.matrix + H.matrix.conj().T) / 2)
        self._pauli_cache: dict[int, list[np.ndarray]] = {}

    @classmethod
    def from_potential(cls, phi: Potential) -> "Propagator":
        return cls(hamiltonian(phi))

    def reconstruction_error(self) -> float:
        V, lam = self.eigenvectors, self.eigenvalues
        return float(np.max(np.abs((V * lam) @ V.conj().T - self.H.matrix)))

    def evolve_matrix(self, M: np.ndarray, t: float) -> np.ndarray:
        """``e^{iHt} M e^{-iHt}`` for a full-region matrix."""
        if t == 0:
            return M.copy()
        V = self.eigenvectors
        ph = np.exp(1j * self.eigenvalues * t)
        inner = V.conj().T @ M @ V
        inner *= ph[:, None] * ph.conj()[None, :]
        return V @ inner @ V.conj().T

    def positions(self, X: SiteSet) -> list[int]:
        return [self.registry.region.index(s) for s in X]

    def evolved_paulis(self, pos: int, t: float) -> list[np.ndarray]:
        """``τ_t(σ)`` for the three Paulis on factor ``pos`` (qubits only).

        ``V†(σ ⊗ 1)V`` is cached per factor, so each call costs two matrix
        products per Pauli.
        """
        if pos not in self._pauli_cache:
            frame = SpinFrame([pos], 2, len(self.registry.region))
            V = self.eigenvectors
            self._pauli_cache[pos] = [V.conj().T @ frame.left(S, V) for S in _PAULIS]
        V = self.eigenvectors
        ph = np.exp(1j * self.eigenvalues * t)
        phase = ph[:, None] * ph.conj()[None, :]
        return [V @ (St * phase) @ V.conj().T for St in self._pauli_cache[pos]]


def evolve(P: Propagator, A: LatticeOperator, t: float) -> LatticeOperator:
    reg = P.registry
    full = embed(A, reg.region).matrix
    return LatticeOperator(reg.region, P.evolve_matrix(full, t), reg)


class Sandwich(NamedTuple):
    lower: float
    upper: float


@dataclass
class GrowthDetail:
    lower: float
    upper: float
    optimizer: float
    restriction: float
    A: np.ndarray | None = None
    B: np.ndarray | None = None


def _frame(P: Propagator, X: SiteSet) -> SpinFrame:
    reg = P.registry
    return SpinFrame(P.positions(X), reg.site_dim, len(reg.region))


def _matrix_units(n: int) -> list[np.ndarray]:
    out = []
    for i in range(n):
        for j in range(n):
            E = np.zeros((n, n), dtype=complex)
            E[i, j] = 1
            out.append(E)
    return out


def _evolved_units(P: Propagator, X: SiteSet, t: float) -> np.ndarray:
    fx = _frame(P, X)
    n = fx.local_dim
    F = np.empty((n, n, fx.dim, fx.dim), dtype=complex)
    for idx, E in enumerate(_matrix_units(n)):
        F[idx // n, idx % n] = P.evolve_matrix(fx.embed(E), t)
    return F


def _haar_sampler(n: int):
    from .operators import haar_unitary

    return lambda rng: haar_unitary(n, rng)


def _check_sets(P: Propagator, X, Y, require_disjoint: bool) -> tuple[SiteSet, SiteSet]:
    reg = P.registry
    X, Y = reg.site_set(X), reg.site_set(Y)
    if not len(X) or not len(Y):
        raise ValidationError("commutator growth needs nonempty X and Y")
    if require_disjoint and len(X & Y):
        raise ValidationError(f"{X!r} and {Y!r} overlap")
    return X, Y


def _growth(P: Propagator, X: SiteSet, Y: SiteSet, F: np.ndarray,
            opts: AscentOptions, rng: np.random.Generator) -> GrowthDetail:
    reg = P.registry
    fy = _frame(P, Y)
    obj = CommutatorObjective(F, fy)
    basis_x = weyl_basis(reg.site_dim, len(X))[1:]
    basis_y = weyl_basis(reg.site_dim, len(Y))[1:]

    restricted = [top_singular(fy.complement_part(obj.f_of(S)))[0] for S in basis_x]
    upper = min(2.0, 2.0 * math.sqrt(sum(r * r for r in restricted)))
    if upper == 0.0:
        return GrowthDetail(0.0, 0.0, 0.0, 0.0)

    res = maximize_commutator(
        obj, basis_x, basis_y, rng, opts,
        sample_a=_haar_sampler(reg.dim(X)), sample_b=_haar_sampler(reg.dim(Y)),
    )
    lower = max(res.value, max(restricted))
    return GrowthDetail(min(lower, upper), upper, res.value, max(restricted), res.A, res.B)


def _qubit_fast(P: Propagator, X: SiteSet, Y: SiteSet) -> bool:
    return P.registry.site_dim == 2 and len(X) == 1 and len(Y) == 1


def _pauli_sandwich(Ms: Sequence[np.ndarray], pos: int, n: int) -> Sandwich:
    """Bounds on ``C`` from Hermitian ``τ_t(S_i)`` and the Paulis on factor ``pos``.

    With site ``y`` moved last and rotated into the eigenbasis of ``σ``,
    ``[M, σ]`` is block off-diagonal with blocks ``±2 M'_{01}``, so its norm
    is ``2 ‖M'_{01}‖`` (``M`` Hermitian).  The Pauli twirl
    ``Γ_{y^c} M = ¼ Σ_σ σ M σ`` gives ``‖(1 - Γ_{y^c}) M‖ ≤ ¼ Σ_σ ‖[M, σ]‖``.
    """
    a, b = 2 ** pos, 2 ** (n - pos - 1)
    h = a * b
    best, total = 0.0, 0.0
    for M in Ms:
        T = M.reshape(a, 2, b, a, 2, b).transpose(0, 2, 1, 3, 5, 4).reshape(h, 2, h, 2)
        cs = []
        for W in _PAULI_BASES:
            w0, w1 = W[:, 0].conj(), W[:, 1]
            block = np.einsum("k,akbl,l->ab", w0, T, w1)
            cs.append(2.0 * spectral_norm(block))
        best = max(best, max(cs))
        total += (sum(cs) / 4.0) ** 2
    return Sandwich(best, min(2.0, 2.0 * math.sqrt(total)))


def _fast_growth(P: Propagator, X: SiteSet, Y: SiteSet, Ms: Sequence[np.ndarray]) -> Sandwich:
    (pos,) = P.positions(Y)
    return _pauli_sandwich(Ms, pos, len(P.registry.region))


def _merge(a: Sandwich, b: Sandwich) -> Sandwich:
    upper = min(a.upper, b.upper)
    return Sandwich(min(max(a.lower, b.lower), upper), upper)


def commutator_growth(P: Propagator, X, Y, t: float, opts: AscentOptions | None = None,
                      seed: int = 0, require_disjoint: bool = False) -> Sandwich:
    """Certified interval for ``C_{X,Y}(t)``."""
    X, Y = _check_sets(P, X, Y, require_disjoint)
    if t == 0 and not (X & Y):
        # τ_0 is the identity and disjoint supports commute
        return Sandwich(0.0, 0.0)
    opts = opts or AscentOptions()
    d = _growth(P, X, Y, _evolved_units(P, X, t), opts, np.random.default_rng(seed))
    out = Sandwich(d.lower, d.upper)
    if _qubit_fast(P, X, Y):
        (px,) = P.positions(X)
        out = _merge(out, _fast_growth(P, X, Y, P.evolved_paulis(px, t)))
    return out


def double_commutator_units(P: Propagator, X: SiteSet) -> np.ndarray:
    """``[H, E_ij ⊗ 1]`` for the matrix units on X."""
    fx = _frame(P, X)
    H = P.H.matrix
    n = fx.local_dim
    F = np.empty((n, n, fx.dim, fx.dim), dtype=complex)
    for idx, E in enumerate(_matrix_units(n)):
        F[idx // n, idx % n] = fx.right(H, E) - fx.left(E, H)
    return F


# ---- Lieb-Robinson bound functions -----------------------------------------

@dataclass(frozen=True)
class BoundParams:
    mu: float
    v: float
    K: float

    def __post_init__(self):
        if not (self.mu > 0 and self.v > 0 and self.K > 0):
            raise ValidationError("bound parameters must be strictly positive")


def g_factor(params: BoundParams, t: float, dist: int) -> float:
    growth = math.exp(params.mu * params.v * abs(t))
    return growth - 1.0 if dist > 0 else growth


def bound_value(params: BoundParams, t: float, X, Y, lattice: Lattice) -> float:
    """``2 min{1, g(t) f(X, Y)}`` with ``f = min(|X|, |Y|) K exp(-μ d(X, Y))``."""
    X, Y = SiteSet(X), SiteSet(Y)
    dist = set_distance(lattice, X, Y)
    f = min(len(X), len(Y)) * params.K * math.exp(-params.mu * dist)
    g = g_factor(params, t, dist)
    return 2.0 * min(1.0, g * f)


# ---- cone profiles ---------------------------------------------------------

@dataclass
class ConeRow:
    t: float
    x: Site
    y: Site
    distance: int
    C_lower: float
    C_upper: float
    bound: float | None = None


CSV_HEADER = ["t", "x", "y", "distance", "C_lower", "C_upper", "bound"]


def fmt(v: float) -> str:
    return format(float(v), ".12g")


def _site_str(s: Site) -> str:
    return str(s[0]) if len(s) == 1 else ";".join(str(c) for c in s)


@dataclass
class ConeProfile:
    rows: list[ConeRow] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([fmt(r.t), _site_str(r.x), _site_str(r.y), r.distance,
                        fmt(r.C_lower), fmt(r.C_upper), "" if r.bound is None else fmt(r.bound)])
        return buf.getvalue()

    def times(self) -> list[float]:
        return sorted({r.t for r in self.rows})

    def distances(self) -> list[int]:
        return sorted({r.distance for r in self.rows})


def default_time_grid(tmin: float = 1e-3, tmax: float = 10.0, steps: int = 20) -> list[float]:
    return [0.0] + [float(t) for t in np.geomspace(tmin, tmax, steps)]


def cone_profile(model: Potential | Propagator, t_grid: Sequence[float],
                 pairs: Iterable[tuple] | None = None, params: BoundParams | None = None,
                 opts: AscentOptions | None = None, seed: int = 0) -> ConeProfile:
    """Commutator growth between single sites over a time grid.

    Rows come out grouped by time, then by pair, in the order given.  The
    default pairs join the first site of the region to every other site.

    For qubits the interval comes from evolved Paulis alone (see
    ``_pauli_sandwich``); passing ``opts`` with ``iterations > 0`` also runs
    the unitary ascent and keeps the tighter of the two intervals.  Other
    local dimensions always use the ascent.
    """
    P = model if isinstance(model, Propagator) else Propagator.from_potential(model)
    reg = P.registry
    lat = reg.lattice
    if not len(t_grid):
        raise ValidationError("empty time grid")
    sites = reg.region.sites
    if pairs is None:
        pairs = [(sites[0], y) for y in sites[1:]]
    pairs = [(lat.check_site(x), lat.check_site(y)) for x, y in pairs]
    if not pairs:
        raise ValidationError("no site pairs requested")
    fast = reg.site_dim == 2
    ascent = not fast or (opts is not None and opts.iterations > 0)
    opts = opts or AscentOptions(iterations=30, restarts=1)
    profile = ConeProfile()
    row = 0
    for t in t_grid:
        units: dict[Site, np.ndarray] = {}
        paulis: dict[Site, list[np.ndarray]] = {}
        for x, y in pairs:
            X, Y = SiteSet([x]), SiteSet([y])
            out = Sandwich(0.0, 2.0)
            if t == 0 and x != y:
                out = Sandwich(0.0, 0.0)
            elif fast:
                if x not in paulis:
                    paulis[x] = P.evolved_paulis(P.positions(X)[0], t)
                out = _fast_growth(P, X, Y, paulis[x])
            if ascent and out.upper > 0 and not (t == 0 and x != y):
                if x not in units:
                    units[x] = _evolved_units(P, X, t)
                rng = np.random.default_rng([seed, row])
                d = _growth(P, X, Y, units[x], opts, rng)
                out = _merge(out, Sandwich(d.lower, d.upper)) if fast else Sandwich(d.lower, d.upper)
            dist = distance(lat, x, y)
            b = bound_value(params, t, X, Y, lat) if params is not None else None
            profile.rows.append(ConeRow(float(t), x, y, dist, out.lower, out.upper, b))
            row += 1
    return profile


def _crossing_time(ts: np.ndarray, cs: np.ndarray, threshold: float) -> float | None:
    above = np.nonzero(cs >= threshold)[0]
    if not len(above) or above[0] == 0:
        return None
    k = above[0]
    t0, t1, c0, c1 = ts[k - 1], ts[k], cs[k - 1], cs[k]
    if c0 > 0:
        # interpolate in log C, where the growth is close to linear
        w = (math.log(threshold) - math.log(c0)) / (math.log(c1) - math.log(c0))
    else:
        w = (threshold - c0) / (c1 - c0)
    return float(t0 + w * (t1 - t0))


def fit_cone(profile: ConeProfile, threshold: float, column: str = "C_lower",
             floor: float = 1e-12, saturation: float = 1.0) -> tuple[float, float]:
    """Empirical decay rate and front velocity of a cone profile.

    The decay rate is minus the slope of ``log C`` against distance, taken
    at each time from unsaturated points (``floor < C < saturation``, at
    least three distances) and combined by the median.  The velocity comes
    from the times at which each distance first reaches ``threshold``:
    for the bound shape ``(e^{μvt} - 1) e^{-μx}`` the front obeys
    ``v t = log(1 + θ e^{μx}) / μ``, and ``v`` is the least-squares slope
    of that transformed front against the crossing time.  The intercept is
    left free: it is zero for the bound shape itself, and absorbs the
    threshold-dependent offset of a front that is only straight at large
    distance.
    """
    if column not in ("C_lower", "C_upper"):
        raise ValidationError(f"unknown column {column!r}")
    data: dict[int, list[tuple[float, float]]] = {}
    for r in profile.rows:
        if r.distance > 0:
            data.setdefault(r.distance, []).append((r.t, getattr(r, column)))
    by_time: dict[float, list[tuple[int, float]]] = {}
    for dist, pts in data.items():
        for t, c in pts:
            by_time.setdefault(t, []).append((dist, c))

    slopes = []
    for t, pts in by_time.items():
        good = [(dd, c) for dd, c in pts if floor < c < saturation]
        if len({dd for dd, _ in good}) < 3:
            continue
        x = np.array([dd for dd, _ in good], dtype=float)
        y = np.log([c for _, c in good])
        slopes.append(-np.polyfit(x, y, 1)[0])
    if not slopes:
        raise ValidationError("degenerate profile: no time slice with decaying data")
    mu = float(np.median(slopes))
    if not mu > 0:
        raise ValidationError("degenerate profile: commutators do not decay with distance")

    tstar, s = [], []
    for dist, pts in sorted(data.items()):
        pts.sort()
        ts = np.array([p[0] for p in pts])
        cs = np.array([p[1] for p in pts])
        tc = _crossing_time(ts, cs, threshold)
        if tc is None or tc <= 0:
            continue
        tstar.append(tc)
        s.append(math.log1p(threshold * math.exp(mu * dist)) / mu)
    if len(tstar) < 2:
        raise ValidationError("degenerate profile: fewer than two threshold crossings")
    v = float(np.polyfit(np.array(tstar), np.array(s), 1)[0])
    if not (math.isfinite(v) and v > 0):
        raise ValidationError("degenerate profile: front does not advance")
    return mu, v


def majorizing_params(profile: ConeProfile, mu: float, v: float) -> BoundParams:
    """Smallest ``K`` for which the bound with rates ``(μ, v)`` covers ``C_upper``.

    Single-site rows only (``min(|X|, |Y|) = 1``).
    """
    K = 1e-300
    for r in profile.rows:
        if r.C_upper <= 0:
            continue
        g = g_factor(BoundParams(mu, v, 1.0), r.t, r.distance)
        f = math.exp(-mu * r.distance)
        if g * f <= 0:
            raise ValidationError("nonzero commutator where every bound vanishes")
        K = max(K, (r.C_upper / 2.0) / (g * f))
    return BoundParams(mu, v, K)
