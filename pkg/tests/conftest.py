from __future__ import annotations

import sys
from itertools import combinations
from pathlib import Path

import numpy as np
import pytest

from lrlocality import Potential, SiteRegistry, SiteSet, potential_from_json
from lrlocality.operators import LatticeOperator, random_hermitian

sys.path.insert(0, str(Path(__file__).parent))

ROOT = Path(__file__).resolve().parents[1]
MODELS = ROOT / "models"


def tfim_json(n: int, J: float = 1.0, h: float = 1.0, extra=()) -> dict:
    terms = [{"sites": [i, i + 1], "pauli": "ZZ", "coeff": J} for i in range(n - 1)]
    terms += [{"sites": [i], "pauli": "X", "coeff": h} for i in range(n)]
    terms += list(extra)
    return {"lattice": {"lengths": [n], "periodic": [False]}, "site_dim": 2, "terms": terms}


def tfim(n: int, J: float = 1.0, h: float = 1.0, extra=()) -> Potential:
    return potential_from_json(tfim_json(n, J, h, extra))


def random_hamiltonian(n: int, rng: np.random.Generator) -> LatticeOperator:
    reg = SiteRegistry.chain(n)
    return LatticeOperator(reg.region, random_hermitian(2**n, rng), reg)


def random_kbody(n: int, k: int, rng: np.random.Generator, scale: float = 1.0) -> Potential:
    """Random Hermitian terms on every set of at most ``k`` sites."""
    reg = SiteRegistry.chain(n)
    phi = Potential(reg, declared_k=k)
    for size in range(1, k + 1):
        for S in combinations(range(n), size):
            phi.add(reg.op(random_hermitian(2**size, rng, scale), S))
    return phi


@pytest.fixture(scope="session")
def tfim6() -> Potential:
    return tfim(6)


@pytest.fixture(scope="session")
def tfim8() -> Potential:
    return tfim(8)


@pytest.fixture(scope="session")
def planted6() -> Potential:
    return tfim(6, extra=[{"sites": [0, 5], "pauli": "XX", "coeff": 1e-2}])


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


__all__ = ["MODELS", "SiteSet", "random_hamiltonian", "random_kbody", "tfim", "tfim_json"]
