"""Geometry of the periodic square lattice: sites, tuples and parent sets.

Sites are indexed row-major: site = row * L + col.  Parent sets implement
the Markov blankets of the two lattice Hamiltonians: for the pair model a
spin's parents are its 4 nearest neighbours; for the plaquette model they
are the 8 surrounding sites sharing a plaquette.
"""

from __future__ import annotations

from itertools import combinations


def site(L: int, row: int, col: int) -> int:
    return (row % L) * L + (col % L)


def coords(L: int, s: int):
    return divmod(s, L)


def neighbors(L: int, s: int) -> tuple:
    """The 4 nearest neighbours (duplicates possible when L == 2)."""
    r, c = divmod(s, L)
    return (
        site(L, r - 1, c),
        site(L, r + 1, c),
        site(L, r, c - 1),
        site(L, r, c + 1),
    )


def nn_pairs(L: int) -> list:
    """All distinct nearest-neighbour pairs (2*L*L for L > 2)."""
    pairs = set()
    for r in range(L):
        for c in range(L):
            s = site(L, r, c)
            pairs.add(tuple(sorted((s, site(L, r, c + 1)))))
            pairs.add(tuple(sorted((s, site(L, r + 1, c)))))
    return sorted(pairs)


def all_pairs(n_sites: int) -> list:
    return list(combinations(range(n_sites), 2))


def non_nn_pairs(L: int) -> list:
    nn = set(nn_pairs(L))
    return [p for p in all_pairs(L * L) if p not in nn]


def offset_pairs(L: int, dr: int, dc: int) -> list:
    """Distinct pairs of sites separated by a fixed lattice offset."""
    pairs = set()
    for r in range(L):
        for c in range(L):
            pairs.add(tuple(sorted((site(L, r, c), site(L, r + dr, c + dc)))))
    return sorted(pairs)


def representative_non_nn_pairs(L: int) -> list:
    """2*L*L non-nearest pairs whose neighbourhoods do not overlap.

    Knight-move offsets (1,2) and (2,1) guarantee 4+4 distinct parents,
    the configuration used for screening and estimation on non-nearest
    pairs.
    """
    if L < 5:
        raise ValueError("need L >= 5 for disjoint knight-move neighbourhoods")
    return sorted(set(offset_pairs(L, 1, 2)) | set(offset_pairs(L, 2, 1)))


def plaquettes(L: int) -> list:
    """The L*L elementary squares, each as a sorted 4-tuple of sites."""
    quads = []
    for r in range(L):
        for c in range(L):
            quads.append(tuple(sorted((
                site(L, r, c),
                site(L, r, c + 1),
                site(L, r + 1, c),
                site(L, r + 1, c + 1),
            ))))
    return sorted(set(quads))


def plaquette_triples(L: int) -> list:
    """All 3-subsets of plaquettes (4 per plaquette, distinct for L > 2)."""
    triples = set()
    for quad in plaquettes(L):
        for trip in combinations(quad, 3):
            triples.add(trip)
    return sorted(triples)


def pair_parents(L: int, sites_) -> tuple:
    """Markov blanket under the nearest-neighbour pair Hamiltonian."""
    sites_ = set(sites_)
    blanket = set()
    for s in sites_:
        blanket.update(neighbors(L, s))
    return tuple(sorted(blanket - sites_))


def plaquette_parents(L: int, sites_) -> tuple:
    """Markov blanket under the plaquette Hamiltonian."""
    sites_ = set(sites_)
    blanket = set()
    for quad in plaquettes(L):
        if sites_ & set(quad):
            blanket.update(quad)
    return tuple(sorted(blanket - sites_))


def parents_for(L: int, sites_, hamiltonian: str) -> tuple:
    if hamiltonian == "ising_pair":
        return pair_parents(L, sites_)
    if hamiltonian == "plaquette4":
        return plaquette_parents(L, sites_)
    raise ValueError(f"unknown hamiltonian kind {hamiltonian!r}")
