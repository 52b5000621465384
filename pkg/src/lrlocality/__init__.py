"""Lieb-Robinson cones and locality certificates for finite lattice models."""

from .diagnosis import (
    EpsilonEntry,
    EpsilonTable,
    LocalityCertificate,
    certify,
    detect_long_range,
    double_restriction,
    epsilon_estimate,
    epsilon_table,
    mk_constant,
)
from .dynamics import (
    BoundParams,
    ConeProfile,
    Propagator,
    bound_value,
    commutator_growth,
    cone_profile,
    evolve,
    fit_cone,
    majorizing_params,
)
from .errors import ResourceCapError, ValidationError
from .fermions import (
    FermionAlgebra,
    FermionPotential,
    GradedOperator,
    even_odd_split,
    fermion_model_from_json,
    fermionic_canonical_form,
    fermionic_certify,
    fermionic_reduce,
    parity,
)
from .lattice import Lattice, SiteSet, delta_empty, diameter, distance, subsets
from .operators import (
    LatticeOperator,
    SiteRegistry,
    commutator,
    embed,
    haar_twirl_estimate,
    op_norm,
    reduce,
)
from .potential import (
    DecayFit,
    Potential,
    basis_expansion_prefactor_demo,
    canonical_form,
    decay_fit,
    hamiltonian,
    is_canonical,
    load_potential,
    potential_from_json,
)
from .shift import RingModel, build_ring, discrete_locality_check, short_time_slope

__version__ = "0.1.0"

__all__ = [
    "BoundParams",
    "ConeProfile",
    "DecayFit",
    "EpsilonEntry",
    "EpsilonTable",
    "FermionAlgebra",
    "FermionPotential",
    "GradedOperator",
    "Lattice",
    "LatticeOperator",
    "LocalityCertificate",
    "Potential",
    "Propagator",
    "ResourceCapError",
    "RingModel",
    "SiteRegistry",
    "SiteSet",
    "ValidationError",
    "basis_expansion_prefactor_demo",
    "bound_value",
    "build_ring",
    "canonical_form",
    "certify",
    "commutator",
    "commutator_growth",
    "cone_profile",
    "decay_fit",
    "delta_empty",
    "detect_long_range",
    "diameter",
    "discrete_locality_check",
    "distance",
    "double_restriction",
    "embed",
    "epsilon_estimate",
    "epsilon_table",
    "even_odd_split",
    "evolve",
    "fermion_model_from_json",
    "fermionic_canonical_form",
    "fermionic_certify",
    "fermionic_reduce",
    "fit_cone",
    "haar_twirl_estimate",
    "hamiltonian",
    "is_canonical",
    "load_potential",
    "majorizing_params",
    "mk_constant",
    "op_norm",
    "parity",
    "potential_from_json",
    "reduce",
    "short_time_slope",
    "subsets",
]
