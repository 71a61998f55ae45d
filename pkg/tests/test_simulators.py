import math

import numpy as np
import pytest
from scipy.stats import chisquare

from tlim import (
    HamiltonianConfig,
    TargetSpec,
    TraitConfig,
    enumerate_distribution,
    exact_interaction,
    ising_metropolis,
    plaquette_metropolis,
    regression3_trait_config,
    simulate_trait,
    ukbb_trait_config,
)
from tlim import lattice
from tlim.simulators import pair_energy
from tlim.estimators import additive_interaction
from tlim.uncertainty import bootstrap


def test_config_validation():
    with pytest.raises(ValueError):
        HamiltonianConfig(L=1, T=1.0)
    with pytest.raises(ValueError):
        HamiltonianConfig(L=4, T=-1.0)
    with pytest.raises(ValueError):
        HamiltonianConfig(L=4, T=1.0, kind="plaquette4")  # J required
    cfg = HamiltonianConfig(L=4, T=2.0)
    assert cfg.coupling == pytest.approx(0.25)


def test_free_spins_are_fair_coins():
    cfg = HamiltonianConfig(L=4, T=1.0, kind="ising_pair", J=0.0)
    m = ising_metropolis(cfg, 20000, seed=1, burn_in_sweeps=50,
                         thin_sweeps=2)
    means = np.array([m.column_bool(i).mean() for i in range(16)])
    # 3-sigma binomial band; thinning keeps samples nearly independent
    assert np.all(np.abs(means - 0.5) < 3 * np.sqrt(0.25 / 20000) * 3)


def test_wrong_kind_rejected():
    cfg = HamiltonianConfig(L=4, T=1.0, kind="ising_pair")
    with pytest.raises(ValueError):
        plaquette_metropolis(cfg, 10, seed=0)
    pcfg = HamiltonianConfig(L=4, T=1.0, kind="plaquette4", J=0.1)
    with pytest.raises(ValueError):
        ising_metropolis(pcfg, 10, seed=0)


def test_sampler_deterministic_given_seed():
    cfg = HamiltonianConfig(L=3, T=2.0)
    a = ising_metropolis(cfg, 200, seed=5, burn_in_sweeps=20, thin_sweeps=2)
    b = ising_metropolis(cfg, 200, seed=5, burn_in_sweeps=20, thin_sweeps=2)
    assert np.array_equal(a.to_spins(), b.to_spins())
    c = ising_metropolis(cfg, 200, seed=6, burn_in_sweeps=20, thin_sweeps=2)
    assert not np.array_equal(a.to_spins(), c.to_spins())


def test_ising_l2_matches_enumeration():
    cfg = HamiltonianConfig(L=2, T=2.0)
    m = ising_metropolis(cfg, 100000, seed=7, thin_sweeps=20)
    d = enumerate_distribution(cfg)
    observed = np.bincount(m.state_codes(), minlength=16)
    _, p = chisquare(observed, d.probabilities * m.n_samples)
    assert p > 0.01


def test_plaquette_l2_matches_enumeration():
    cfg = HamiltonianConfig(L=2, T=1.0, kind="plaquette4", J=0.2)
    m = plaquette_metropolis(cfg, 100000, seed=8, thin_sweeps=20)
    d = enumerate_distribution(cfg)
    observed = np.bincount(m.state_codes(), minlength=16)
    _, p = chisquare(observed, d.probabilities * m.n_samples)
    assert p > 0.01


def test_incremental_energy_equals_full_difference():
    # the kernels track an integer product sum; one flip must change it
    # by exactly the local rule's integer value
    from tlim.simulators import pair_product_sum, plaquette_product_sum

    rng = np.random.default_rng(9)
    for cfg, product_sum in [
        (HamiltonianConfig(L=4, T=1.7), pair_product_sum),
        (HamiltonianConfig(L=4, T=1.0, kind="plaquette4", J=0.2),
         plaquette_product_sum),
    ]:
        states = (rng.random((10000, 16)) < 0.5).astype(np.uint8)
        flips = rng.integers(0, 16, 10000)
        flipped = states.copy()
        flipped[np.arange(10000), flips] ^= 1
        L = cfg.L
        d_full = product_sum(L, flipped) - product_sum(L, states)

        spins = 2 * states.astype(np.int64) - 1
        d_local = np.empty(10000, np.int64)
        for r in range(10000):
            s = flips[r]
            if cfg.kind == "ising_pair":
                nbr = sum(spins[r, x] for x in lattice.neighbors(L, s))
                d_local[r] = -2 * spins[r, s] * nbr
            else:
                local = 0
                for quad in lattice.plaquettes(L):
                    if s in quad:
                        prod = 1
                        for q in quad:
                            prod *= spins[r, q]
                        local += prod
                d_local[r] = -2 * local
        assert np.array_equal(d_full, d_local)
        # the Metropolis acceptance uses exactly -scale * (integer change)
        assert np.array_equal(-cfg.energy_scale * d_full,
                              -cfg.energy_scale * d_local)


def test_energy_provenance_matches_recomputation():
    cfg = HamiltonianConfig(L=3, T=2.2)
    m = ising_metropolis(cfg, 5000, seed=11, burn_in_sweeps=100,
                         thin_sweeps=2)
    states = np.column_stack([m.column_values(i) for i in range(9)])
    assert m.provenance["energy_mean"] == pytest.approx(
        pair_energy(cfg, states).mean()
    )


def test_hammersley_clifford_neighbour_sufficiency():
    # conditional law of one spin given everything equals its law given
    # the four neighbours only
    cfg = HamiltonianConfig(L=3, T=2.0)
    d = enumerate_distribution(cfg)
    probs = d.probabilities
    states = np.arange(512)
    site = 4
    nbrs = set(lattice.neighbors(3, site))
    rng = np.random.default_rng(12)
    for _ in range(20):
        rest = {i: int(rng.integers(0, 2)) for i in range(9) if i != site}
        sel_full = np.ones(512, bool)
        for i, v in rest.items():
            sel_full &= ((states >> i) & 1) == v
        on = ((states >> site) & 1) == 1
        p_full = probs[sel_full & on].sum() / probs[sel_full].sum()

        sel_nbr = np.ones(512, bool)
        for i in nbrs:
            sel_nbr &= ((states >> i) & 1) == rest[i]
        p_nbr = probs[sel_nbr & on].sum() / probs[sel_nbr].sum()
        assert p_full == pytest.approx(p_nbr, abs=1e-12)


def test_markov_blanket_sufficiency_for_interactions():
    cfg = HamiltonianConfig(L=4, T=2.5)
    d = enumerate_distribution(cfg)
    nn = lattice.nn_pairs(4)[0]
    far = next(p for p in lattice.non_nn_pairs(4)
               if len(lattice.pair_parents(4, p)) == 8)
    for pair in (nn, far):
        full = exact_interaction(d, TargetSpec(targets=pair))
        parents = lattice.pair_parents(4, pair)
        blk = exact_interaction(
            d, TargetSpec(targets=pair, conditioning=parents)
        )
        assert blk == pytest.approx(full, rel=1e-12)

    pcfg = HamiltonianConfig(L=4, T=1.0, kind="plaquette4", J=0.15)
    pd = enumerate_distribution(pcfg)
    quad = lattice.plaquettes(4)[0]
    for tup in [quad[:2], quad[:3], quad]:
        full = exact_interaction(pd, TargetSpec(targets=tup))
        parents = lattice.plaquette_parents(4, tup)
        blk = exact_interaction(
            pd, TargetSpec(targets=tup, conditioning=parents)
        )
        assert blk == pytest.approx(full, rel=1e-12)


def test_plaquette_analytic_factors_on_l3():
    J = 0.2
    cfg = HamiltonianConfig(L=3, T=1.0, kind="plaquette4", J=J)
    d = enumerate_distribution(cfg)
    quad = lattice.plaquettes(3)[0]
    edge = (quad[0], quad[1])
    triple = quad[:3]
    checks = [
        ((quad[0],), -8.0),
        (edge, 8.0),
        (triple, -8.0),
        (quad, 16.0),
    ]
    for targets, divisor in checks:
        val = exact_interaction(d, TargetSpec(targets=targets))
        assert math.log(val) / divisor == pytest.approx(J, rel=1e-10)


def test_ising_exact_couplings_on_l3():
    cfg = HamiltonianConfig(L=3, T=2.0)
    d = enumerate_distribution(cfg)
    nn = lattice.nn_pairs(3)[0]
    val = exact_interaction(d, TargetSpec(targets=nn))
    assert math.log(val) / 8.0 == pytest.approx(cfg.coupling, rel=1e-10)
    far = lattice.non_nn_pairs(3)[0]
    val0 = exact_interaction(d, TargetSpec(targets=far))
    assert math.log(val0) == pytest.approx(0.0, abs=1e-10)


def test_enumerate_uniform_energy_gives_uniform_law():
    d = enumerate_distribution(np.full(16, 3.7))
    assert np.allclose(d.probabilities, 1 / 16)


def test_enumerate_rejects_oversized_systems():
    with pytest.raises(ValueError):
        enumerate_distribution(HamiltonianConfig(L=5, T=1.0))
    with pytest.raises(ValueError):
        enumerate_distribution(np.zeros(12))  # not a power of two


def test_trait_constant_outcome():
    cfg = TraitConfig(
        n_individuals=100,
        variant_frequencies=(0.5, 0.5),
        intercepts=(3.25,),
    )
    m = simulate_trait(cfg)
    assert np.all(m.outcome("y") == 3.25)


def test_trait_determinism_and_layout():
    cfg = ukbb_trait_config(n=501, seed=4)
    a = simulate_trait(cfg)
    b = simulate_trait(cfg)
    assert np.array_equal(a.outcome("height"), b.outcome("height"))
    names = [v.name for v in a.variables]
    assert names == ["V1", "V2", "V3", "V4", "V5", "V6", "sex"]
    # equal-split strata
    sex = a.column_values(6)
    assert abs(int((sex == 0).sum()) - int((sex == 1).sum())) <= 1


def test_trait_validation():
    with pytest.raises(ValueError):
        TraitConfig(n_individuals=0, variant_frequencies=(0.5,))
    with pytest.raises(ValueError):
        TraitConfig(n_individuals=10, variant_frequencies=(1.5,))
    with pytest.raises(ValueError):
        TraitConfig(n_individuals=10, variant_frequencies=(0.5,),
                    pairwise_coeffs=((0, 0, 1.0),))
    with pytest.raises(ValueError):
        TraitConfig(n_individuals=10, variant_frequencies=(0.5,),
                    noise_sd=-1.0)


def test_regression_estimates_sharpen_with_sample_size():
    # convergence trend: the 3-point estimate at N=1000 should sit much
    # closer to the truth than at N=60, and with a smaller error bar
    def run(n, seed):
        m = simulate_trait(regression3_trait_config(n=n, seed=seed))
        spec = TargetSpec(targets=(0, 1, 2))
        est = additive_interaction(m, "Y", spec, min_bin_count=1)
        boot = bootstrap(
            m,
            lambda mm: additive_interaction(mm, "Y", spec,
                                            min_bin_count=1).value,
            n_replicates=100, seed=seed,
        )
        return est.value, boot.stderr

    small_err = np.mean([abs(run(60, s)[0] - 2.0) for s in range(8)])
    big_vals = [run(1000, s) for s in range(8)]
    big_err = np.mean([abs(v - 2.0) for v, _ in big_vals])
    assert big_err < small_err
    assert np.mean([se for _, se in big_vals]) < 0.4


def test_exact_distribution_sampling_is_faithful():
    rng = np.random.default_rng(13)
    d = enumerate_distribution(rng.uniform(0, 2, 8))
    m = d.sample(50000, seed=3)
    observed = np.bincount(m.state_codes(), minlength=8)
    _, p = chisquare(observed, d.probabilities * m.n_samples)
    assert p > 0.01
