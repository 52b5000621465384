"""Hypercubic lattices, finite site sets and subset combinatorics.

Sites are integer coordinate tuples.  A 1D site may be given as a bare
``int`` anywhere a site is accepted; it is normalized to a 1-tuple.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, product
from typing import Iterable, Iterator, Sequence, Union

from .errors import ResourceCapError, ValidationError

Site = tuple[int, ...]
SiteLike = Union[int, Sequence[int]]

#: Largest set whose power set we are willing to enumerate.
MAX_SUBSET_SIZE = 24


def as_site(x: SiteLike) -> Site:
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return (int(x),)
    try:
        return tuple(int(c) for c in x)
    except TypeError:
        raise ValidationError(f"not a lattice site: {x!r}") from None


class SiteSet:
    """Immutable, duplicate-free set of sites kept in lexicographic order.

    Iteration order is canonical, so two site sets are equal exactly when
    their ``sites`` tuples are equal.  The order also fixes the tensor
    factor order of operators supported on the set.
    """

    __slots__ = ("_sites", "_lookup")

    def __init__(self, sites: Iterable[SiteLike] = ()):
        if isinstance(sites, SiteSet):
            self._sites = sites._sites
        else:
            self._sites = tuple(sorted({as_site(s) for s in sites}))
        self._lookup = frozenset(self._sites)

    @property
    def sites(self) -> tuple[Site, ...]:
        return self._sites

    def __iter__(self) -> Iterator[Site]:
        return iter(self._sites)

    def __len__(self) -> int:
        return len(self._sites)

    def __contains__(self, x) -> bool:
        return as_site(x) in self._lookup

    def __hash__(self) -> int:
        return hash(self._sites)

    def __eq__(self, other) -> bool:
        if isinstance(other, SiteSet):
            return self._sites == other._sites
        return NotImplemented

    def __lt__(self, other: "SiteSet") -> bool:
        return (len(self), self._sites) < (len(other), other._sites)

    def __or__(self, other: "SiteSet") -> "SiteSet":
        return SiteSet(self._lookup | SiteSet(other)._lookup)

    def __and__(self, other: "SiteSet") -> "SiteSet":
        return SiteSet(self._lookup & SiteSet(other)._lookup)

    def __sub__(self, other: "SiteSet") -> "SiteSet":
        return SiteSet(self._lookup - SiteSet(other)._lookup)

    def __le__(self, other: "SiteSet") -> bool:
        return self._lookup <= SiteSet(other)._lookup

    def __ge__(self, other: "SiteSet") -> bool:
        return self._lookup >= SiteSet(other)._lookup

    def issubset(self, other) -> bool:
        return self <= SiteSet(other)

    def index(self, x: SiteLike) -> int:
        """Tensor-factor position of site ``x`` within this set."""
        return self._sites.index(as_site(x))

    def __repr__(self) -> str:
        if all(len(s) == 1 for s in self._sites):
            return "SiteSet({" + ", ".join(str(s[0]) for s in self._sites) + "})"
        return f"SiteSet({set(self._sites)!r})"

    def to_json(self) -> list:
        """Sorted site list; 1D sites are written as bare integers."""
        return [s[0] if len(s) == 1 else list(s) for s in self._sites]


EMPTY = SiteSet()


@dataclass(frozen=True)
class Lattice:
    """Finite box of ``Z^D`` with optional periodic wrap per axis."""

    lengths: tuple[int, ...]
    periodic: tuple[bool, ...]

    def __post_init__(self):
        lengths = tuple(int(n) for n in self.lengths)
        if not lengths or any(n < 1 for n in lengths):
            raise ValidationError(f"lattice lengths must be positive, got {self.lengths!r}")
        periodic = self.periodic
        if isinstance(periodic, bool):
            periodic = (periodic,) * len(lengths)
        periodic = tuple(bool(p) for p in periodic)
        if len(periodic) != len(lengths):
            raise ValidationError("one periodicity flag per axis is required")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "periodic", periodic)

    @classmethod
    def chain(cls, n: int, periodic: bool = False) -> "Lattice":
        return cls((n,), (periodic,))

    @property
    def dimension(self) -> int:
        return len(self.lengths)

    def check_site(self, x: SiteLike) -> Site:
        s = as_site(x)
        if len(s) != self.dimension or any(not 0 <= c < n for c, n in zip(s, self.lengths)):
            raise ValidationError(f"site {x!r} outside lattice with lengths {self.lengths}")
        return s

    def sites(self) -> SiteSet:
        return SiteSet(product(*(range(n) for n in self.lengths)))

    def site_set(self, sites: Iterable[SiteLike]) -> SiteSet:
        return SiteSet(self.check_site(s) for s in sites)

    def to_json(self) -> dict:
        return {"lengths": list(self.lengths), "periodic": list(self.periodic)}

    @classmethod
    def from_json(cls, data: dict) -> "Lattice":
        try:
            lengths = data["lengths"]
        except (KeyError, TypeError):
            raise ValidationError("lattice needs a 'lengths' list") from None
        if isinstance(lengths, int):
            lengths = [lengths]
        periodic = data.get("periodic", False)
        return cls(tuple(lengths), periodic if isinstance(periodic, bool) else tuple(periodic))


def distance(lattice: Lattice, x: SiteLike, y: SiteLike) -> int:
    """Graph distance: Manhattan metric, wrapped on periodic axes."""
    a, b = lattice.check_site(x), lattice.check_site(y)
    total = 0
    for ca, cb, n, per in zip(a, b, lattice.lengths, lattice.periodic):
        d = abs(ca - cb)
        total += min(d, n - d) if per else d
    return total


def set_distance(lattice: Lattice, X: SiteSet, Y: SiteSet) -> int:
    """``d(X, Y)``, the smallest distance between a site of X and one of Y."""
    if not len(X) or not len(Y):
        raise ValidationError("distance between sets needs two nonempty sets")
    return min(distance(lattice, x, y) for x in X for y in Y)


def diameter(lattice: Lattice, X: SiteSet) -> tuple[int, tuple[Site, Site]]:
    """Largest pairwise distance in ``X`` and a maximizing pair.

    Ties are broken by the lexicographically smallest pair, so the result
    is deterministic.
    """
    X = SiteSet(X)
    if not len(X):
        raise ValidationError("diameter of the empty set is undefined")
    best, pair = 0, (X.sites[0], X.sites[0])
    for x, y in combinations(X.sites, 2):
        d = distance(lattice, x, y)
        if d > best:
            best, pair = d, (x, y)
    return best, pair


def delta_empty(Z: SiteSet) -> int:
    return 1 if len(Z) == 0 else 0


def subsets(
    Z: SiteSet,
    containing: SiteSet | None = None,
    proper: bool = False,
    max_size: int | None = None,
) -> Iterator[SiteSet]:
    """Enumerate subsets of ``Z`` by increasing size, lexicographic within a size.

    Parameters
    ----------
    containing : SiteSet, optional
        Only yield supersets of this set (which must lie inside ``Z``).
    proper : bool
        Skip ``Z`` itself.
    max_size : int, optional
        Skip subsets with more than ``max_size`` sites.
    """
    Z = SiteSet(Z)
    if len(Z) > MAX_SUBSET_SIZE:
        raise ResourceCapError(
            f"refusing to enumerate subsets of a {len(Z)}-site set (cap {MAX_SUBSET_SIZE})"
        )
    forced = SiteSet(containing) if containing is not None else EMPTY
    if not forced <= Z:
        raise ValidationError(f"{forced!r} is not contained in {Z!r}")
    free = (Z - forced).sites
    top = len(Z) if max_size is None else min(max_size, len(Z))
    for size in range(len(forced), top + 1):
        if proper and size == len(Z):
            continue
        for extra in combinations(free, size - len(forced)):
            yield SiteSet(forced.sites + extra)
