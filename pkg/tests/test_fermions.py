import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lrlocality import (
    FermionAlgebra,
    FermionPotential,
    ResourceCapError,
    SiteSet,
    ValidationError,
    even_odd_split,
    fermion_model_from_json,
    fermionic_canonical_form,
    fermionic_certify,
    fermionic_reduce,
    parity,
)
from lrlocality.fermions import (
    even_haar_unitary,
    fermionic_double_restriction,
    fermionic_epsilon,
    fermionic_reduce_lattice,
    fermionic_twirl_estimate,
    s_independence_gap,
)
from lrlocality.operators import random_hermitian

from conftest import MODELS


def even_on(alg, modes, rng, hermitian=False):
    """Random even operator generated by ``modes``."""
    k = len(modes)
    a = random_hermitian(2**k, rng) if hermitian else rng.normal(size=(2**k, 2**k)) + 1j * rng.normal(size=(2**k, 2**k))
    A = alg.frame(modes).embed_local(a)
    P = alg.parity_modes(modes)
    return (A + P @ A @ P) / 2


def odd_on(alg, modes, rng):
    k = len(modes)
    A = alg.frame(modes).embed_local(rng.normal(size=(2**k, 2**k)))
    P = alg.parity_modes(modes)
    return (A - P @ A @ P) / 2


def complement_modes(alg, X):
    keep = alg.site_modes(X)
    return [m for m in range(alg.n_modes) if m not in keep]


def supported_on(alg, A, modes, tol=1e-10):
    fr = alg.frame(modes)
    local = fr.local_part(A)
    return np.max(np.abs(fr.embed_local(local) - A)) <= tol


# ---- CAR and parity ----------------------------------------------------------

@pytest.mark.parametrize("n", [1, 2, 5, 8])
def test_car_relations(n):
    alg = FermionAlgebra(n)
    f = [alg.annihilator(m) for m in range(n)]
    one = np.eye(alg.dim)
    for a in range(n):
        for b in range(n):
            anti = f[a] @ f[b].conj().T + f[b].conj().T @ f[a]
            assert np.max(np.abs(anti - (a == b) * one)) <= 1e-12
            assert np.max(np.abs(f[a] @ f[b] + f[b] @ f[a])) <= 1e-12


def test_car_with_two_orbitals_and_aux():
    alg = FermionAlgebra(3, modes_per_site=2, aux=2)
    assert alg.n_modes == 8
    assert alg.mode(1, 2) == 3 and alg.aux_modes() == [6, 7]
    f = [alg.annihilator(m) for m in range(8)]
    for a in range(8):
        for b in range(a, 8):
            anti = f[a] @ f[b].conj().T + f[b].conj().T @ f[a]
            assert np.max(np.abs(anti - (a == b) * np.eye(alg.dim))) <= 1e-12


def test_mode_cap():
    with pytest.raises(ResourceCapError):
        FermionAlgebra(11)
    with pytest.raises(ResourceCapError):
        FermionAlgebra(8, aux=3)


def test_single_mode_parity():
    alg = FermionAlgebra(1)
    assert np.array_equal(parity(alg, [0]), np.diag([1, -1]))


@settings(max_examples=30, deadline=None)
@given(mask=st.integers(0, 63), other=st.integers(0, 63))
def test_parity_identities(mask, other):
    alg = FermionAlgebra(6)
    X = [i for i in range(6) if mask >> i & 1]
    Y = [i for i in range(6) if other >> i & 1 and i not in X]
    P = parity(alg, X)
    assert np.array_equal(P @ P, np.eye(alg.dim))
    assert np.array_equal(P, P.conj().T)
    assert np.array_equal(parity(alg, X + Y), P @ parity(alg, Y))
    # P_X is the ordered product of (-1)^n
    ref = np.eye(alg.dim)
    for x in reversed(X):
        ref = ref @ (np.eye(alg.dim) - 2 * alg.number(x))
    assert np.allclose(P, ref)


def test_even_odd_split_examples():
    alg = FermionAlgebra(3)
    f0, f1 = alg.annihilator(0), alg.annihilator(1)
    n0 = alg.number(0)
    s = even_odd_split(alg, f0)
    assert np.allclose(s.even_part, 0) and np.allclose(s.odd_part, f0) and s.is_odd()
    s = even_odd_split(alg, n0)
    assert np.allclose(s.even_part, n0) and s.is_even()
    assert np.allclose(n0, f0.conj().T @ f0)
    mixed = f0 + f0.conj().T @ f1
    s = even_odd_split(alg, mixed)
    assert np.allclose(s.odd_part, f0)
    assert np.allclose(s.even_part, f0.conj().T @ f1)


@pytest.mark.parametrize("seed", range(3))
def test_graded_invariants(seed):
    alg = FermionAlgebra(4)
    g = np.random.default_rng(seed)
    A = g.normal(size=(16, 16)) + 1j * g.normal(size=(16, 16))
    s = even_odd_split(alg, A)
    P = s.parity
    assert np.max(np.abs(s.even_part + s.odd_part - A)) <= 1e-12
    assert np.max(np.abs(s.even_part @ P - P @ s.even_part)) <= 1e-12
    assert np.max(np.abs(s.odd_part @ P + P @ s.odd_part)) <= 1e-12
    local = even_odd_split(alg, A, X=[0, 1])
    assert np.allclose(local.even_part + local.odd_part, A)


def test_tracial_state():
    alg = FermionAlgebra(4)
    assert alg.tracial_state(np.eye(alg.dim)) == pytest.approx(1.0)
    assert alg.tracial_state(alg.annihilator(2)) == 0
    assert alg.tracial_state(alg.number(0) @ alg.number(3)) == pytest.approx(0.25)
    rng = np.random.default_rng(4)
    A, B = even_on(alg, [0, 1], rng), even_on(alg, [2, 3], rng)
    assert alg.tracial_state(A @ B) == pytest.approx(alg.tracial_state(A) * alg.tracial_state(B))
    C = rng.normal(size=(16, 16))
    assert alg.tracial_state(A @ C) == pytest.approx(alg.tracial_state(C @ A))


# ---- the fermionic reduction ---------------------------------------------------

def test_reduce_examples():
    alg = FermionAlgebra(4, aux=1)
    one = np.eye(alg.dim)
    assert np.allclose(fermionic_reduce(alg, one, [0, 1]), one)
    assert np.allclose(fermionic_reduce(alg, alg.annihilator(3), [0, 1]), 0)
    assert np.allclose(fermionic_reduce(alg, alg.annihilator(4), [0, 1]), 0)
    T = complement_modes(alg, [0, 1])
    P = alg.parity_modes(T)
    assert np.allclose(fermionic_reduce(alg, P, [0, 1]), P)
    assert not supported_on(alg, P, alg.site_modes([0, 1]))
    # every mode in X: nothing to trace
    A = even_on(alg, alg.site_modes([0, 1, 2, 3]), np.random.default_rng(0))
    assert np.allclose(fermionic_reduce(alg, A, [0, 1, 2, 3]), A)


@pytest.mark.parametrize("seed", range(4))
def test_bimodule_property(seed):
    g = np.random.default_rng(seed)
    alg = FermionAlgebra(4, aux=1)
    X = [0, 2]
    mx = alg.site_modes(X)
    A, C = even_on(alg, mx, g), even_on(alg, mx, g)
    B = even_on(alg, complement_modes(alg, X), g)
    lhs = fermionic_reduce(alg, A @ B @ C, X)
    rhs = A @ fermionic_reduce(alg, B, X) @ C
    assert np.max(np.abs(lhs - rhs)) <= 1e-12
    Bfull = g.normal(size=(alg.dim, alg.dim))
    lhs = fermionic_reduce(alg, A @ Bfull @ C, X)
    assert np.max(np.abs(lhs - A @ fermionic_reduce(alg, Bfull, X) @ C)) <= 1e-12


@pytest.mark.parametrize("seed", range(3))
def test_odd_part_on_complement_vanishes(seed):
    g = np.random.default_rng(seed)
    alg = FermionAlgebra(4, aux=2)
    B = odd_on(alg, complement_modes(alg, [1]), g)
    assert np.max(np.abs(fermionic_reduce(alg, B, [1]))) <= 1e-12


@pytest.mark.parametrize("seed", range(3))
def test_lattice_operators_land_on_x(seed):
    g = np.random.default_rng(seed)
    alg = FermionAlgebra(4)
    A = g.normal(size=(16, 16)) + 1j * g.normal(size=(16, 16))
    Aeven = even_odd_split(alg, A).even_part
    for X in ([0], [1, 3], [0, 1, 2]):
        mx = alg.site_modes(X)
        R = fermionic_reduce_lattice(alg, Aeven, X)
        assert supported_on(alg, R, mx) and even_odd_split(alg, R).is_even()
        # odd pieces on X survive, so general input lands on the algebra of X
        assert supported_on(alg, fermionic_reduce_lattice(alg, A, X), mx)
        assert s_independence_gap(alg, A, X) <= 1e-12
        assert s_independence_gap(alg, Aeven, X, (1, 2, 3)) <= 1e-12


def test_reduce_equals_tracial_part_on_complement():
    g = np.random.default_rng(11)
    alg = FermionAlgebra(4)
    A = even_on(alg, alg.site_modes([2, 3]), g)
    R = fermionic_reduce_lattice(alg, A, [0, 1])
    assert np.allclose(R, alg.tracial_state(A) * np.eye(16), atol=1e-12)


def test_s_independence_needs_aux():
    alg = FermionAlgebra(3)
    with pytest.raises(ValidationError):
        s_independence_gap(alg, np.eye(8), [0], (0, 1))
    with pytest.raises(ValidationError):
        fermionic_reduce_lattice(alg, np.eye(8), [0], aux=0)


@pytest.mark.parametrize("seed", range(3))
def test_composition_on_even_operators(seed):
    g = np.random.default_rng(seed)
    alg = FermionAlgebra(4, aux=1)
    A = even_on(alg, list(range(alg.n_modes)), g)
    for X, Y in [([0, 1], [1, 2]), ([0, 3], [0, 1, 2]), ([2], [0, 1])]:
        XY = sorted(set(X) & set(Y))
        gx = lambda B: fermionic_reduce(alg, B, X)  # noqa: E731
        gy = lambda B: fermionic_reduce(alg, B, Y)  # noqa: E731
        ref = fermionic_reduce(alg, A, XY)
        assert np.max(np.abs(gx(gy(A)) - ref)) <= 1e-10
        assert np.max(np.abs(gy(gx(A)) - ref)) <= 1e-10


@pytest.mark.parametrize("X", [[0], [1, 2]])
def test_parity_projector_split(X):
    alg = FermionAlgebra(3, aux=2)
    one = np.eye(alg.dim)
    Pc = alg.parity(SiteSet(range(3)) - SiteSet(X))
    Ps = alg.parity_modes(alg.aux_modes())
    Pcs = alg.parity_modes(complement_modes(alg, X))
    plus = lambda P: (one + P) / 2  # noqa: E731
    minus = lambda P: (one - P) / 2  # noqa: E731
    assert np.max(np.abs(plus(Pcs) - (plus(Pc) @ plus(Ps) + minus(Pc) @ minus(Ps)))) <= 1e-12
    assert np.max(np.abs(minus(Pcs) - (plus(Pc) @ minus(Ps) + minus(Pc) @ plus(Ps)))) <= 1e-12
    assert np.allclose(fermionic_reduce(alg, Pcs, X), Pcs)


def test_even_twirl_matches_reduce():
    alg = FermionAlgebra(2, aux=1)
    A = even_on(alg, list(range(3)), np.random.default_rng(5), hermitian=True)
    A = A / np.linalg.norm(A, 2)
    est = fermionic_twirl_estimate(alg, A, [0], 10_000, seed=3)
    assert np.max(np.abs(est - fermionic_reduce(alg, A, [0]))) <= 5e-2


def test_even_haar_unitary_blocks():
    U = even_haar_unitary(3, np.random.default_rng(0))
    alg = FermionAlgebra(3)
    assert np.allclose(U @ U.conj().T, np.eye(8))
    assert even_odd_split(alg, U).is_even()


@pytest.mark.parametrize("seed", range(3))
def test_fermionic_restriction_lemma(seed):
    g = np.random.default_rng(seed)
    alg = FermionAlgebra(3, aux=1)
    A = even_on(alg, list(range(alg.n_modes)), g, hermitian=True)
    X = [0]
    gap = np.linalg.norm(A - fermionic_reduce(alg, A, X), 2)
    T = complement_modes(alg, X)
    fr = alg.frame(T)
    best = 0.0
    for _ in range(3000):
        B = fr.embed_local(even_haar_unitary(len(T), g))
        best = max(best, np.linalg.norm(A @ B - B @ A, 2))
    assert gap <= best


# ---- potentials and certificates ----------------------------------------------

@pytest.fixture(scope="module")
def hopping():
    return fermion_model_from_json(json.loads((MODELS / "hopping6.json").read_text()))


def test_hopping_model_loads(hopping):
    alg, phi = hopping
    assert alg.n_modes == 6
    assert set(phi.terms) == {SiteSet([i, i + 1]) for i in range(5)}
    f = alg.annihilator
    ref = -sum(f(i).conj().T @ f(i + 1) + f(i + 1).conj().T @ f(i) for i in range(5))
    assert np.allclose(phi.hamiltonian(), ref)


@pytest.fixture(scope="module")
def hopping_cert(hopping):
    alg, phi = hopping
    return fermionic_certify(alg, phi, k=2)


def test_hopping_certificate(hopping_cert):
    cert = hopping_cert
    assert cert.valid and cert.checks.ok
    assert cert.decay.classification == "strictly-local(1)"
    for i in range(5):
        e = cert.entry([i, i + 1])
        assert e.norm == pytest.approx(1.0) and e.norm <= e.bound
    assert cert.entry([0, 3]).norm <= 1e-10


def test_hopping_canonical_form_matches_terms(hopping):
    alg, phi = hopping
    canon = fermionic_canonical_form(alg, phi.hamiltonian())
    assert set(canon.terms) == set(phi.terms)
    for Zs, m in phi.terms.items():
        assert np.allclose(canon.terms[Zs], m, atol=1e-10)


def test_hopping_epsilon_interval(hopping):
    alg, phi = hopping
    e = fermionic_epsilon(alg, phi.hamiltonian(), 0, 1)
    assert 0 < e.lower <= e.upper
    far = fermionic_epsilon(alg, phi.hamiltonian(), 0, 3)
    assert far.upper <= 1e-10


def planted_density(alg, weight, term):
    f = alg.annihilator
    H = -sum(f(i).conj().T @ f(i + 1) + f(i + 1).conj().T @ f(i) for i in range(alg.n_modes - 1))
    return H + weight * term


def test_planted_density_terms():
    alg = FermionAlgebra(5)
    n0, n4 = alg.number(0), alg.number(4)
    one = np.eye(alg.dim)
    # n0 n4 = (1 - P0)(1 - P4) / 4 only has a quarter of its weight on {0, 4}
    canon = fermionic_canonical_form(alg, planted_density(alg, 1e-2, n0 @ n4), max_size=5)
    assert np.linalg.norm(canon.terms[SiteSet([0, 4])], 2) == pytest.approx(2.5e-3, abs=1e-6)
    pp = (one - 2 * n0) @ (one - 2 * n4)
    canon = fermionic_canonical_form(alg, planted_density(alg, 1e-2, pp), max_size=5)
    assert np.linalg.norm(canon.terms[SiteSet([0, 4])], 2) == pytest.approx(1e-2, abs=1e-6)


def test_zero_hamiltonian_certificate():
    alg = FermionAlgebra(3)
    cert = fermionic_certify(alg, np.zeros((8, 8)), k=2)
    assert cert.valid and all(e.norm == 0 for e in cert.entries)


def test_identity_check_with_complete_k():
    alg = FermionAlgebra(3)
    g = np.random.default_rng(9)
    H = even_on(alg, [0, 1, 2], g, hermitian=True)
    cert = fermionic_certify(alg, H, k=3)
    assert cert.valid and cert.checks.identity_error <= 1e-10
    DR = fermionic_double_restriction(alg, H, 0, 2)
    acc = sum(m for Zs, m in cert.canonical.terms.items() if 0 in Zs and 2 in Zs)
    assert np.allclose(DR, acc, atol=1e-10)


def test_odd_term_rejected():
    with pytest.raises(ValidationError):
        fermion_model_from_json(json.loads((MODELS / "odd_term.json").read_text()))
    alg = FermionAlgebra(3)
    with pytest.raises(ValidationError):
        fermionic_certify(alg, alg.annihilator(0) + alg.creator(0), k=2)
    with pytest.raises(ValidationError):
        FermionPotential(alg).add([0], alg.annihilator(0) + alg.creator(0))
    with pytest.raises(ValidationError):
        FermionPotential(alg).add([0, 1], 1j * alg.number(0) @ alg.number(1))


@pytest.mark.parametrize("bad", [
    [],
    {"modes": []},
    {"modes": [{"site": 0, "j": 1}, {"site": 0, "j": 1}]},
    {"modes": [{"site": 0, "j": 1}], "terms": [{"monomials": [["q", 0]]}]},
    {"modes": [{"site": 0, "j": 1}], "terms": [{"monomials": [["n", 3]]}]},
    {"modes": [{"site": 0, "j": 1}], "terms": [{"coeff": 1}]},
])
def test_model_json_validation(bad):
    with pytest.raises(ValidationError):
        fermion_model_from_json(bad)


def test_certify_cap_and_k(hopping):
    alg, phi = hopping
    with pytest.raises(ResourceCapError):
        fermionic_certify(alg, phi, k=2, s1=3, s2=2)
    with pytest.raises(ValidationError):
        fermionic_certify(alg, phi, k=None)
    with pytest.raises(ValidationError):
        fermionic_epsilon(alg, phi.hamiltonian(), 0, 1, s1=0)
