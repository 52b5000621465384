import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lrlocality import (
    BoundParams,
    LatticeOperator,
    Propagator,
    SiteRegistry,
    SiteSet,
    ValidationError,
    bound_value,
    commutator_growth,
    cone_profile,
    evolve,
    fit_cone,
    majorizing_params,
    op_norm,
)
from lrlocality.dynamics import (
    ConeProfile,
    ConeRow,
    _fast_growth,
    _evolved_units,
    _growth,
    default_time_grid,
    g_factor,
)
from lrlocality.operators import haar_unitary, random_hermitian
from lrlocality.optimize import AscentOptions

from conftest import tfim
from oracles import X, Y, Z, restricted_upper, tfim_matrix

REG2 = SiteRegistry.chain(2)
REG3 = SiteRegistry.chain(3)


def rand_prop(reg, g):
    return Propagator(LatticeOperator(reg.region, random_hermitian(reg.dim(), g), reg))


# ---- evolution ----------------------------------------------------------------

def test_propagator_reconstruction(tfim6):
    P = Propagator.from_potential(tfim6)
    assert P.reconstruction_error() <= 1e-10


def test_propagator_rejects_non_hermitian():
    with pytest.raises(ValidationError):
        Propagator(REG2.op(np.triu(np.ones((4, 4))), [0, 1]))


def test_evolve_at_zero_is_identity(rng):
    P = rand_prop(REG3, rng)
    A = REG3.op(random_hermitian(2, rng), [1])
    assert np.array_equal(evolve(P, A, 0.0).matrix, np.kron(np.kron(np.eye(2), A.matrix), np.eye(2)))


def test_evolve_rotation():
    reg = SiteRegistry.chain(1)
    P = Propagator(reg.op(Z, [0]))
    out = evolve(P, reg.op(X, [0]), math.pi / 2)
    assert np.allclose(out.matrix, -X, atol=1e-12)
    out = evolve(P, reg.op(X, [0]), math.pi / 4)
    assert np.allclose(out.matrix, -Y, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), s=st.floats(-3, 3), t=st.floats(-3, 3))
def test_unitarity_and_group_law(seed, s, t):
    g = np.random.default_rng(seed)
    P = rand_prop(REG3, g)
    A = LatticeOperator(REG3.region, random_hermitian(8, g), REG3)
    At = evolve(P, A, t)
    assert abs(op_norm(At) - op_norm(A)) <= 1e-10 * max(1.0, op_norm(A))
    two = evolve(P, evolve(P, A, s), t)
    assert np.max(np.abs(two.matrix - evolve(P, A, s + t).matrix)) <= 1e-9


def test_two_time_commutator_identity(rng):
    P = rand_prop(REG3, rng)
    A = REG3.op(random_hermitian(2, rng), [0])
    B = REG3.op(random_hermitian(2, rng), [2])
    t1, t0 = 0.9, 0.35
    A1, B0 = evolve(P, A, t1).matrix, evolve(P, B, t0).matrix
    lhs = A1 @ B0 - B0 @ A1
    inner = evolve(P, A, t1 - t0).matrix
    Bf = np.kron(np.eye(4), B.matrix)
    rhs = evolve(P, LatticeOperator(REG3.region, inner @ Bf - Bf @ inner, REG3), t0).matrix
    assert np.allclose(lhs, rhs, atol=1e-10)
    assert np.linalg.norm(lhs, 2) == pytest.approx(np.linalg.norm(inner @ Bf - Bf @ inner, 2))


# ---- commutator growth ---------------------------------------------------------

def test_growth_vanishes_at_time_zero(tfim6):
    P = Propagator.from_potential(tfim6)
    for y in range(1, 6):
        assert tuple(commutator_growth(P, [0], [y], 0.0)) == (0.0, 0.0)


@pytest.mark.parametrize("J", [0.1, 1.0, 3.0])
def test_zz_slope_is_four_j(J):
    P = Propagator(J * REG2.pauli("ZZ", [0, 1]))
    dt = 1e-4
    lo, hi = commutator_growth(P, [0], [1], dt)
    assert lo / dt == pytest.approx(4 * abs(J), rel=1e-2)
    assert lo <= hi


def test_growth_zero_without_coupling():
    H = REG2.pauli("X", [0]) + REG2.pauli("Z", [1])
    P = Propagator(embed2(H))
    for t in (0.1, 1.0, 7.0):
        assert commutator_growth(P, [0], [1], t).upper <= 1e-12


def embed2(H):
    from lrlocality import embed
    return embed(H, REG2.region)


def test_growth_rejects_overlap_when_asked(tfim6):
    P = Propagator.from_potential(tfim6)
    with pytest.raises(ValidationError):
        commutator_growth(P, [0, 1], [1, 2], 0.1, require_disjoint=True)
    with pytest.raises(ValidationError):
        commutator_growth(P, [], [1], 0.1)
    lo, hi = commutator_growth(P, [0, 1], [1, 2], 0.1)
    assert 0 < lo <= hi <= 2


@pytest.mark.parametrize("seed, t", [(0, 0.1), (1, 0.3), (2, 0.05), (3, 1.0)])
def test_sandwich_soundness_against_random_sweep(seed, t):
    g = np.random.default_rng(seed)
    P = rand_prop(REG2, g)
    lo, hi = commutator_growth(P, [0], [1], t, seed=seed)
    n = 100_000
    U, V = haar_unitary(2, g, size=n), haar_unitary(2, g, size=n)
    A = np.einsum("sij,kl->sikjl", U, np.eye(2)).reshape(n, 4, 4)
    B = np.einsum("ij,skl->sikjl", np.eye(2), V).reshape(n, 4, 4)
    W = P.eigenvectors
    Ut = (W * np.exp(1j * P.eigenvalues * t)) @ W.conj().T
    At = Ut @ A @ Ut.conj().T
    brute = np.linalg.norm(At @ B - B @ At, ord=2, axis=(1, 2)).max()
    assert lo <= hi
    assert brute <= hi + 1e-12
    assert brute >= lo * (1 - 5e-2)


def test_restricted_upper_matches_oracle():
    # frozen from the expm / explicit-trace oracle
    frozen = 7.5012751615e-06
    P = Propagator.from_potential(tfim(6))
    H = tfim_matrix(6)
    ref = restricted_upper(H, 6, 0, 3, 0.1)
    assert ref == pytest.approx(frozen, rel=1e-9)
    lo, hi = commutator_growth(P, [0], [3], 0.1)
    assert hi == pytest.approx(ref, rel=1e-8)
    assert 0.5 * hi <= lo <= hi


@pytest.mark.parametrize("t", [0.1, 0.5, 2.0])
def test_fast_interval_contains_ascent_value(tfim6, t):
    P = Propagator.from_potential(tfim6)
    X0 = SiteSet([0])
    F = _evolved_units(P, X0, t)
    for y in (1, 2, 4):
        Yy = SiteSet([y])
        fast = _fast_growth(P, X0, Yy, P.evolved_paulis(0, t))
        d = _growth(P, X0, Yy, F, AscentOptions(60, 2), np.random.default_rng(0))
        assert fast.lower <= d.upper + 1e-12
        assert d.lower <= fast.upper + 1e-12
        assert fast.upper <= 4 * max(fast.lower, 1e-300)


# ---- bound functions -----------------------------------------------------------

@pytest.mark.parametrize("bad", [(0, 1, 1), (1, -1, 1), (1, 1, 0)])
def test_bound_params_positive(bad):
    with pytest.raises(ValidationError):
        BoundParams(*bad)


def test_bound_value_examples(tfim6):
    lat = tfim6.registry.lattice
    p = BoundParams(1.0, 2.0, 1.5)
    assert bound_value(p, 0.0, [0], [3], lat) == 0.0
    assert bound_value(p, 0.0, [0], [0], lat) == 2.0
    assert bound_value(p, 50.0, [0], [5], lat) == 2.0
    t, d = 0.3, 4
    expect = 2 * min(1.0, (math.exp(1.0 * 2.0 * t) - 1) * 1.5 * math.exp(-d))
    assert bound_value(p, t, [0], [4], lat) == pytest.approx(expect)
    assert bound_value(p, -t, [0], [4], lat) == pytest.approx(expect)
    assert bound_value(p, 0.01, [0, 1], [4, 5], lat) == pytest.approx(
        2 * (math.exp(0.02) - 1) * 2 * 1.5 * math.exp(-3))
    assert g_factor(p, 0.0, 0) == 1.0


# ---- cone profiles --------------------------------------------------------------

@pytest.fixture(scope="module")
def profile8(tfim8):
    return cone_profile(tfim8, default_time_grid())


def test_profile_shape(profile8):
    assert len(profile8) == 7 * 21
    csv = profile8.to_csv().splitlines()
    assert csv[0] == "t,x,y,distance,C_lower,C_upper,bound"
    assert len(csv) == 1 + 7 * 21
    assert all(line.endswith(",") for line in csv[1:])


def test_profile_invariants(profile8):
    for r in profile8.rows:
        assert 0.0 <= r.C_lower <= r.C_upper <= 2.0
        if r.t == 0.0 and r.distance > 0:
            assert r.C_lower == r.C_upper == 0.0


def test_far_pair_outside_cone(tfim8):
    prof = cone_profile(tfim8, [0.1], pairs=[(0, 7)])
    assert prof.rows[0].C_upper <= 1e-3


def test_lower_nonincreasing_in_distance_at_small_t(tfim8):
    prof = cone_profile(tfim8, [0.05, 0.2])
    for t in prof.times():
        vals = [r.C_lower for r in prof.rows if r.t == t]
        floor = 1e-13
        assert all(b <= a or b < floor for a, b in zip(vals, vals[1:]))


def test_profile_errors(tfim6):
    with pytest.raises(ValidationError):
        cone_profile(tfim6, [])
    with pytest.raises(ValidationError):
        cone_profile(tfim6, [0.1], pairs=[])
    with pytest.raises(ValidationError):
        cone_profile(tfim6, [0.1], pairs=[(0, 9)])


def test_profile_with_ascent_is_tighter(tfim6):
    grid = [0.3, 1.0]
    fast = cone_profile(tfim6, grid, pairs=[(0, 2), (1, 4)])
    both = cone_profile(tfim6, grid, pairs=[(0, 2), (1, 4)], opts=AscentOptions(20, 1))
    for a, b in zip(fast.rows, both.rows):
        assert b.C_lower >= a.C_lower - 1e-12
        assert b.C_upper <= a.C_upper + 1e-12


def test_profile_bound_column(tfim6):
    p = BoundParams(1.0, 2.0, 1.0)
    prof = cone_profile(tfim6, [0.0, 0.5], pairs=[(0, 3)], params=p)
    assert [r.bound for r in prof.rows] == [0.0, pytest.approx(2 * (math.exp(1.0) - 1) * math.exp(-3))]
    assert not prof.to_csv().splitlines()[1].endswith(",")


def synthetic(mu, v, grid, dists):
    rows = []
    for t in grid:
        for x in dists:
            c = min(2.0, (math.exp(mu * v * t) - 1) * math.exp(-mu * x))
            rows.append(ConeRow(t, (0,), (x,), x, c, c))
    return ConeProfile(rows)


@pytest.mark.parametrize("threshold", [0.01, 0.1, 0.5])
@pytest.mark.parametrize("mu, v", [(1.0, 2.0), (0.5, 1.0)])
def test_fit_cone_recovers_synthetic(mu, v, threshold):
    prof = synthetic(mu, v, default_time_grid(1e-3, 20, 40), range(1, 11))
    mu_fit, v_fit = fit_cone(prof, threshold)
    assert mu_fit == pytest.approx(mu, rel=5e-2)
    assert v_fit == pytest.approx(v, rel=5e-2)


def test_fit_cone_degenerate():
    zero = ConeProfile([ConeRow(t, (0,), (x,), x, 0.0, 0.0) for t in (0, 1, 2) for x in (1, 2, 3)])
    with pytest.raises(ValidationError):
        fit_cone(zero, 0.1)
    with pytest.raises(ValidationError):
        fit_cone(synthetic(1, 2, [0, 1], range(1, 5)), 0.1, column="bogus")


def test_majorizing_bound_dominates(profile8):
    mu, v = fit_cone(profile8, 0.1)
    params = majorizing_params(profile8, mu, v)
    lat = tfim(8).registry.lattice
    for r in profile8.rows:
        b = bound_value(params, r.t, [r.x], [r.y], lat)
        assert r.C_upper <= b * (1 + 1e-9) + 1e-15


@pytest.fixture(scope="module")
def profile10():
    return cone_profile(tfim(10), default_time_grid())


# v_fit recorded from this profile: 2.23879 (0.05), 2.13294 (0.1), 2.07920 (0.15), 2.04363 (0.2)
V_FIT_TFIM10 = {0.05: 2.23879, 0.1: 2.13294, 0.15: 2.07920, 0.2: 2.04363}


def test_tfim10_front_velocity_stable(profile10):
    vs = {th: fit_cone(profile10, th)[1] for th in np.linspace(0.05, 0.2, 7)}
    assert all(math.isfinite(v) and v > 0 for v in vs.values())
    centre = float(np.mean(list(vs.values())))
    assert all(abs(v - centre) <= 0.1 * centre for v in vs.values())
    for th, v in V_FIT_TFIM10.items():
        assert fit_cone(profile10, th)[1] == pytest.approx(v, rel=1e-4)
