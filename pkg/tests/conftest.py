import pytest

from tlim import HamiltonianConfig, ising_metropolis, plaquette_metropolis


@pytest.fixture(scope="session")
def ising_data():
    """Session cache of Ising datasets keyed by (L, T, n, seed)."""
    cache = {}

    def get(L, T, n, seed, **kwargs):
        key = (L, T, n, seed, tuple(sorted(kwargs.items())))
        if key not in cache:
            cfg = HamiltonianConfig(L=L, T=T, kind="ising_pair")
            cache[key] = ising_metropolis(cfg, n, seed, **kwargs)
        return cache[key]

    return get


@pytest.fixture(scope="session")
def plaquette_data():
    cache = {}

    def get(L, T, J, n, seed, **kwargs):
        key = (L, T, J, n, seed, tuple(sorted(kwargs.items())))
        if key not in cache:
            cfg = HamiltonianConfig(L=L, T=T, kind="plaquette4", J=J)
            cache[key] = plaquette_metropolis(cfg, n, seed, **kwargs)
        return cache[key]

    return get
