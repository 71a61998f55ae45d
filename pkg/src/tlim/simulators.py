"""Samplers and exact oracles for discrete equilibrium systems.

Provides Metropolis samplers for the nearest-neighbour pair Hamiltonian
and the plaquette (4-spin product) Hamiltonian on periodic square
lattices, a linear trait simulator with interaction terms, and an exact
enumerator of small systems that serves as the brute-force oracle for
every estimator.

Energy conventions (spins ``s = +-1``, states stored as 0/1):

* pair model: E = -2J * sum_<ij> s_i s_j over distinct lattice edges
  (the factor 2 folds the symmetric double count of ordered pairs), with
  the uniform-coupling convenience default J = 1/(2T);
* plaquette model: E = -(J/T) * sum over the L^2 elementary squares of
  the product of their four spins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ZeroCell
from .estimators import ResolvedSpec, TargetSpec, _cell_sign, _cell_target_pairs
from .store import BASIS_SPIN, SampleMatrix, from_states
from . import lattice

ISING_PAIR = "ising_pair"
PLAQUETTE4 = "plaquette4"

DEFAULT_BURN_IN_SWEEPS = 1000
DEFAULT_THIN_SWEEPS = 10

_MAX_ENUM_SITES = 20


@dataclass(frozen=True)
class HamiltonianConfig:
    """Lattice size, temperature and coupling of a simulated system."""

    L: int
    T: float
    kind: str = ISING_PAIR
    J: float = None
    boundary: str = "periodic"

    def __post_init__(self):
        if self.L < 2:
            raise ValueError("lattice side must be at least 2")
        if not self.T > 0:
            raise ValueError("temperature must be positive")
        if self.kind not in (ISING_PAIR, PLAQUETTE4):
            raise ValueError(f"unknown hamiltonian kind {self.kind!r}")
        if self.boundary != "periodic":
            raise ValueError("only periodic boundaries are supported")
        if self.kind == PLAQUETTE4 and self.J is None:
            raise ValueError("the plaquette model requires an explicit J")

    @property
    def n_sites(self) -> int:
        return self.L * self.L

    @property
    def coupling(self) -> float:
        """Uniform coupling J; defaults to 1/(2T) for the pair model."""
        return 1.0 / (2.0 * self.T) if self.J is None else float(self.J)

    @property
    def energy_scale(self) -> float:
        """Prefactor multiplying the integer spin-product sum in E."""
        if self.kind == ISING_PAIR:
            return 2.0 * self.coupling
        return self.coupling / self.T


# -- deterministic 64-bit RNG (splitmix64 seeding + xorshift64*) -------------

@njit(cache=True)
def _seed_state(seed):
    x = (np.uint64(seed) + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(-1)
    z = x
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(-1)
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & np.uint64(-1)
    z = z ^ (z >> np.uint64(31))
    if z == np.uint64(0):
        z = np.uint64(0x1234567887654321)
    return z


@njit(cache=True, inline="always")
def _next_u64(state):
    s = state[0]
    s ^= s >> np.uint64(12)
    s ^= (s << np.uint64(25)) & np.uint64(-1)
    s ^= s >> np.uint64(27)
    state[0] = s
    return (s * np.uint64(0x2545F4914F6CDD1D)) & np.uint64(-1)


@njit(cache=True, inline="always")
def _next_float(state):
    return (_next_u64(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def _pair_kernel(L, scale, n_samples, burn_sweeps, thin_sweeps, seed,
                 out, energies):
    n = L * L
    state = np.empty(1, np.uint64)
    state[0] = _seed_state(seed)
    up = np.empty(n, np.int64)
    down = np.empty(n, np.int64)
    left = np.empty(n, np.int64)
    right = np.empty(n, np.int64)
    for r in range(L):
        for c in range(L):
            s = r * L + c
            up[s] = ((r - 1) % L) * L + c
            down[s] = ((r + 1) % L) * L + c
            left[s] = r * L + (c - 1) % L
            right[s] = r * L + (c + 1) % L

    spins = np.empty(n, np.int8)
    for i in range(n):
        spins[i] = np.int8(1) if _next_float(state) < 0.5 else np.int8(-1)

    # integer sum over the per-site right+down bond list
    bond_sum = np.int64(0)
    for s in range(n):
        bond_sum += spins[s] * (spins[right[s]] + spins[down[s]])

    accepts = np.int64(0)
    total_sweeps = burn_sweeps + n_samples * thin_sweeps
    rec = 0
    for sweep in range(total_sweeps):
        for _ in range(n):
            s = np.int64(_next_u64(state) % np.uint64(n))
            nbr = (spins[up[s]] + spins[down[s]]
                   + spins[left[s]] + spins[right[s]])
            d_bond = np.int64(-2) * spins[s] * nbr
            de = -scale * d_bond
            if de <= 0.0 or _next_float(state) < np.exp(-de):
                spins[s] = -spins[s]
                bond_sum += d_bond
                accepts += 1
        if sweep >= burn_sweeps and (sweep - burn_sweeps) % thin_sweeps == thin_sweeps - 1:
            for i in range(n):
                out[rec, i] = np.uint8(1) if spins[i] == 1 else np.uint8(0)
            energies[rec] = -scale * bond_sum
            rec += 1
            if rec == n_samples:
                break
    return accepts, np.int64(total_sweeps) * np.int64(n)


@njit(cache=True)
def _plaquette_kernel(L, scale, n_samples, burn_sweeps, thin_sweeps, seed,
                      out, energies):
    n = L * L
    state = np.empty(1, np.uint64)
    state[0] = _seed_state(seed)
    # members[p] = the 4 sites of the plaquette anchored at site p
    members = np.empty((n, 4), np.int64)
    for r in range(L):
        for c in range(L):
            p = r * L + c
            members[p, 0] = p
            members[p, 1] = r * L + (c + 1) % L
            members[p, 2] = ((r + 1) % L) * L + c
            members[p, 3] = ((r + 1) % L) * L + (c + 1) % L
    # anchors[s] = the 4 plaquettes containing site s
    anchors = np.empty((n, 4), np.int64)
    for r in range(L):
        for c in range(L):
            s = r * L + c
            anchors[s, 0] = s
            anchors[s, 1] = r * L + (c - 1) % L
            anchors[s, 2] = ((r - 1) % L) * L + c
            anchors[s, 3] = ((r - 1) % L) * L + (c - 1) % L

    spins = np.empty(n, np.int8)
    for i in range(n):
        spins[i] = np.int8(1) if _next_float(state) < 0.5 else np.int8(-1)

    prod_sum = np.int64(0)
    for p in range(n):
        prod_sum += (spins[members[p, 0]] * spins[members[p, 1]]
                     * spins[members[p, 2]] * spins[members[p, 3]])

    accepts = np.int64(0)
    total_sweeps = burn_sweeps + n_samples * thin_sweeps
    rec = 0
    for sweep in range(total_sweeps):
        for _ in range(n):
            s = np.int64(_next_u64(state) % np.uint64(n))
            local = np.int64(0)
            for a in range(4):
                p = anchors[s, a]
                local += (spins[members[p, 0]] * spins[members[p, 1]]
                          * spins[members[p, 2]] * spins[members[p, 3]])
            d_prod = np.int64(-2) * local
            de = -scale * d_prod
            if de <= 0.0 or _next_float(state) < np.exp(-de):
                spins[s] = -spins[s]
                prod_sum += d_prod
                accepts += 1
        if sweep >= burn_sweeps and (sweep - burn_sweeps) % thin_sweeps == thin_sweeps - 1:
            for i in range(n):
                out[rec, i] = np.uint8(1) if spins[i] == 1 else np.uint8(0)
            energies[rec] = -scale * prod_sum
            rec += 1
            if rec == n_samples:
                break
    return accepts, np.int64(total_sweeps) * np.int64(n)


def _chain_seed(seed, chain=0) -> np.uint64:
    """Counter-split 64-bit stream seed for one chain."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(chain),))
    return ss.generate_state(1, np.uint64)[0]


def _run_sampler(cfg, kernel, n_samples, seed, burn_in_sweeps, thin_sweeps):
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    if thin_sweeps < 1 or burn_in_sweeps < 0:
        raise ValueError("invalid burn-in/thinning")
    out = np.zeros((n_samples, cfg.n_sites), np.uint8)
    energies = np.zeros(n_samples, np.float64)
    accepts, proposals = kernel(
        cfg.L, cfg.energy_scale, n_samples, burn_in_sweeps, thin_sweeps,
        _chain_seed(seed), out, energies,
    )
    matrix = from_states(
        out, names=[f"v{i}" for i in range(cfg.n_sites)], basis=BASIS_SPIN
    )
    matrix.provenance.update(
        model=cfg.kind, L=cfg.L, T=cfg.T, J=cfg.coupling, seed=int(seed),
        burn_in_sweeps=int(burn_in_sweeps), thin_sweeps=int(thin_sweeps),
        acceptance_rate=float(accepts / proposals),
        energy_mean=float(energies.mean()),
    )
    return matrix


def ising_metropolis(cfg: HamiltonianConfig, n_samples, seed,
                     burn_in_sweeps=DEFAULT_BURN_IN_SWEEPS,
                     thin_sweeps=DEFAULT_THIN_SWEEPS) -> SampleMatrix:
    """Sample the pair Hamiltonian; columns are row-major lattice sites.

    Single-flip Metropolis with random site proposals; one sweep is L^2
    proposals.  Deterministic for a fixed seed.  Near the critical
    temperature autocorrelation grows; raise thin_sweeps if needed.
    """
    if cfg.kind != ISING_PAIR:
        raise ValueError("config is not an ising_pair system")
    return _run_sampler(cfg, _pair_kernel, n_samples, seed,
                        burn_in_sweeps, thin_sweeps)


def plaquette_metropolis(cfg: HamiltonianConfig, n_samples, seed,
                         burn_in_sweeps=DEFAULT_BURN_IN_SWEEPS,
                         thin_sweeps=DEFAULT_THIN_SWEEPS) -> SampleMatrix:
    """Sample the plaquette Hamiltonian (see ising_metropolis)."""
    if cfg.kind != PLAQUETTE4:
        raise ValueError("config is not a plaquette4 system")
    return _run_sampler(cfg, _plaquette_kernel, n_samples, seed,
                        burn_in_sweeps, thin_sweeps)


def pair_product_sum(L: int, states01) -> np.ndarray:
    """Integer sum of s_i*s_j over the per-site right+down bond list."""
    spins = 2 * np.asarray(states01, np.int64) - 1
    total = np.zeros(spins.shape[0], np.int64)
    for r in range(L):
        for c in range(L):
            s = lattice.site(L, r, c)
            total += spins[:, s] * (
                spins[:, lattice.site(L, r, c + 1)]
                + spins[:, lattice.site(L, r + 1, c)]
            )
    return total


def plaquette_product_sum(L: int, states01) -> np.ndarray:
    """Integer sum of the four-spin product over all plaquettes."""
    spins = 2 * np.asarray(states01, np.int64) - 1
    total = np.zeros(spins.shape[0], np.int64)
    for r in range(L):
        for c in range(L):
            total += (
                spins[:, lattice.site(L, r, c)]
                * spins[:, lattice.site(L, r, c + 1)]
                * spins[:, lattice.site(L, r + 1, c)]
                * spins[:, lattice.site(L, r + 1, c + 1)]
            )
    return total


def pair_energy(cfg: HamiltonianConfig, states01) -> np.ndarray:
    """Energies of 0/1 states under the pair Hamiltonian (vectorised)."""
    return -cfg.energy_scale * pair_product_sum(cfg.L, states01)


def plaquette_energy(cfg: HamiltonianConfig, states01) -> np.ndarray:
    return -cfg.energy_scale * plaquette_product_sum(cfg.L, states01)


# -- linear trait simulation ---------------------------------------------------

@dataclass(frozen=True)
class TraitConfig:
    """Linear outcome model over Bernoulli variants with interaction terms.

    The outcome is intercept(stratum) + sum_j alpha_j V_j + pairwise and
    triple product terms + Normal(0, noise_sd^2) noise.  With more than
    one intercept the population is split into equal strata (a stratum
    column is added to the output).
    """

    n_individuals: int
    variant_frequencies: tuple
    linear_coeffs: tuple = ()
    pairwise_coeffs: tuple = ()
    triple_coeffs: tuple = ()
    intercepts: tuple = (0.0,)
    noise_sd: float = 0.0
    seed: int = 0
    outcome_name: str = "y"
    stratum_name: str = "stratum"
    variant_names: tuple = None

    def __post_init__(self):
        if self.n_individuals <= 0:
            raise ValueError("n_individuals must be positive")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")
        freqs = tuple(float(f) for f in self.variant_frequencies)
        if any(not 0.0 < f < 1.0 for f in freqs):
            raise ValueError("variant frequencies must lie in (0, 1)")
        object.__setattr__(self, "variant_frequencies", freqs)
        k = len(freqs)
        lin = tuple(float(a) for a in self.linear_coeffs)
        if len(lin) > k:
            raise ValueError("more linear coefficients than variants")
        lin = lin + (0.0,) * (k - len(lin))
        object.__setattr__(self, "linear_coeffs", lin)
        for entry in self.pairwise_coeffs:
            i, j, _ = entry
            if not (0 <= i < k and 0 <= j < k and i != j):
                raise ValueError(f"bad pairwise term {entry!r}")
        for entry in self.triple_coeffs:
            i, j, l, _ = entry
            if len({i, j, l}) != 3 or max(i, j, l) >= k or min(i, j, l) < 0:
                raise ValueError(f"bad triple term {entry!r}")
        object.__setattr__(self, "intercepts",
                           tuple(float(a) for a in self.intercepts))

    @property
    def n_variants(self) -> int:
        return len(self.variant_frequencies)


def simulate_trait(cfg: TraitConfig) -> SampleMatrix:
    rng = np.random.default_rng(cfg.seed)
    n, k = cfg.n_individuals, cfg.n_variants
    variants = (rng.random((n, k)) < np.asarray(cfg.variant_frequencies)).astype(np.uint8)

    y = np.zeros(n)
    n_strata = len(cfg.intercepts)
    stratum = None
    if n_strata > 1:
        base, extra = divmod(n, n_strata)
        sizes = [base + (1 if s < extra else 0) for s in range(n_strata)]
        stratum = np.repeat(np.arange(n_strata, dtype=np.uint8), sizes)
        y += np.asarray(cfg.intercepts)[stratum]
    else:
        y += cfg.intercepts[0]

    y += variants @ np.asarray(cfg.linear_coeffs)
    for i, j, coeff in cfg.pairwise_coeffs:
        y += coeff * variants[:, i] * variants[:, j]
    for i, j, l, coeff in cfg.triple_coeffs:
        y += coeff * variants[:, i] * variants[:, j] * variants[:, l]
    if cfg.noise_sd > 0:
        y += rng.normal(0.0, cfg.noise_sd, n)

    names = cfg.variant_names or tuple(f"V{i + 1}" for i in range(k))
    from .store import KIND_BINARY, KIND_CATEGORICAL, VariableMeta

    metas = [VariableMeta(nm, KIND_BINARY) for nm in names]
    columns = [variants[:, j] for j in range(k)]
    if stratum is not None:
        kind = KIND_BINARY if n_strata == 2 else KIND_CATEGORICAL
        metas.append(VariableMeta(cfg.stratum_name, kind, max(n_strata, 2)))
        columns.append(stratum)
    matrix = SampleMatrix(metas, columns, {cfg.outcome_name: y})
    matrix.provenance.update(model="trait", seed=int(cfg.seed))
    return matrix


def ukbb_trait_config(n=20000, seed=0) -> TraitConfig:
    """Height-like trait over six variants with one pairwise interaction.

    Two sex strata with intercepts 154/166 cm, coefficients
    (2, 6, -3, 6, -1.5, 6), interaction V1*V2 of 5, noise sd 5 and
    allele frequencies (0.8, 0.7, 0.5, 0.5, 0.5, 0.5).
    """
    return TraitConfig(
        n_individuals=n,
        variant_frequencies=(0.8, 0.7, 0.5, 0.5, 0.5, 0.5),
        linear_coeffs=(2.0, 6.0, -3.0, 6.0, -1.5, 6.0),
        pairwise_coeffs=((0, 1, 5.0),),
        intercepts=(154.0, 166.0),
        noise_sd=5.0,
        seed=seed,
        outcome_name="height",
        stratum_name="sex",
    )


def regression3_trait_config(n=1000, seed=0) -> TraitConfig:
    """Three-variant model with quadratic and cubic interaction terms."""
    return TraitConfig(
        n_individuals=n,
        variant_frequencies=(0.4, 0.7, 0.5),
        linear_coeffs=(-2.0, 10.0, 0.0),
        pairwise_coeffs=((0, 1, 5.0), (0, 2, -2.5), (1, 2, 0.0)),
        triple_coeffs=((0, 1, 2, 2.0),),
        intercepts=(-1.5,),
        noise_sd=1.0,
        seed=seed,
        outcome_name="Y",
        variant_names=("T1", "T2", "T3"),
    )


# -- exact enumeration ---------------------------------------------------------

@dataclass(frozen=True)
class ExactDistribution:
    """Exact probabilities over all 2^n_vars binary states.

    State s assigns bit k of s to variable k (LSB = variable 0).
    """

    n_vars: int
    probabilities: np.ndarray

    def __post_init__(self):
        probs = np.ascontiguousarray(self.probabilities, np.float64)
        if self.n_vars > _MAX_ENUM_SITES:
            raise ValueError(f"enumeration limited to {_MAX_ENUM_SITES} variables")
        if probs.shape != (1 << self.n_vars,):
            raise ValueError("probability table size must be 2^n_vars")
        if probs.min() < 0 or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be non-negative and sum to 1")
        probs.flags.writeable = False
        object.__setattr__(self, "probabilities", probs)

    @classmethod
    def from_energies(cls, energies) -> "ExactDistribution":
        energies = np.asarray(energies, np.float64)
        n_states = energies.shape[0]
        n_vars = int(n_states).bit_length() - 1
        if 1 << n_vars != n_states:
            raise ValueError("energy table length must be a power of two")
        logp = -energies + energies.min()
        probs = np.exp(logp)
        probs /= probs.sum()
        return cls(n_vars, probs)

    def sample(self, n_samples, seed) -> SampleMatrix:
        """Draw i.i.d. states; useful for calibration tests."""
        rng = np.random.default_rng(seed)
        states = rng.choice(1 << self.n_vars, size=n_samples,
                            p=self.probabilities)
        return from_states(_states_to_bits(states, self.n_vars))

    def to_exact_frequency_matrix(self, total=100000) -> SampleMatrix:
        """A dataset whose empirical frequencies define this distribution.

        Each state is replicated max(1, round(p * total)) times; the
        caller should treat the returned matrix's own empirical law as
        the ground truth (it is re-derivable via empirical_distribution).
        """
        counts = np.maximum(1, np.rint(self.probabilities * total)).astype(np.int64)
        states = np.repeat(np.arange(1 << self.n_vars), counts)
        return from_states(_states_to_bits(states, self.n_vars))


def _states_to_bits(states, n_vars) -> np.ndarray:
    states = np.asarray(states, np.int64)
    out = np.empty((states.shape[0], n_vars), np.uint8)
    for k in range(n_vars):
        out[:, k] = (states >> k) & 1
    return out


def empirical_distribution(m: SampleMatrix) -> ExactDistribution:
    """The empirical joint law of an all-binary matrix."""
    codes = m.state_codes()
    counts = np.bincount(codes, minlength=1 << m.n_variables)
    return ExactDistribution(m.n_variables, counts / m.n_samples)


def enumerate_distribution(config_or_energies) -> ExactDistribution:
    """Exact Boltzmann distribution of a lattice config or energy table."""
    if isinstance(config_or_energies, HamiltonianConfig):
        cfg = config_or_energies
        if cfg.n_sites > _MAX_ENUM_SITES:
            raise ValueError(
                f"{cfg.n_sites} sites exceed the {_MAX_ENUM_SITES}-site "
                "enumeration limit"
            )
        states = _states_to_bits(np.arange(1 << cfg.n_sites), cfg.n_sites)
        energy_fn = pair_energy if cfg.kind == ISING_PAIR else plaquette_energy
        return ExactDistribution.from_energies(energy_fn(cfg, states))
    return ExactDistribution.from_energies(config_or_energies)


def _resolve_for_distribution(d: ExactDistribution, spec: TargetSpec) -> ResolvedSpec:
    targets = spec.targets
    if not targets or len(set(targets)) != len(targets):
        raise ValueError("targets must be non-empty and distinct")
    if any(not 0 <= t < d.n_vars for t in targets):
        raise ValueError("target index out of range")
    if spec.covariates:
        raise ValueError("covariates are not defined for exact distributions")
    transitions = spec.transitions or ((0, 1),) * len(targets)
    if any(t not in ((0, 1), (1, 0)) for t in transitions):
        raise ValueError("exact distributions are binary; transitions must be 0<->1")
    if spec.conditioning is None:
        conditioning = tuple(i for i in range(d.n_vars) if i not in targets)
    else:
        conditioning = spec.conditioning
        if set(conditioning) & set(targets):
            raise ValueError("conditioning overlaps targets")
    given = dict(spec.reference or ())
    cond_pairs = tuple((i, int(given.get(i, 0))) for i in sorted(conditioning))
    if any(v not in (0, 1) for _, v in cond_pairs):
        raise ValueError("reference values must be 0 or 1")
    return ResolvedSpec(tuple(targets), tuple(transitions), cond_pairs, ())


def exact_interaction(d: ExactDistribution, spec: TargetSpec,
                      kind="multiplicative") -> float:
    """Interaction evaluated on exact probabilities.

    Multiplicative: the alternating product of cell probabilities (value,
    not log).  Additive: the alternating sum of conditional expectations
    of the canonical outcome ln p(state).  Variables neither targeted nor
    conditioned on are marginalised.
    """
    res = _resolve_for_distribution(d, spec)
    n = res.n
    states = np.arange(1 << d.n_vars)
    ref_mask = np.ones(states.shape[0], bool)
    for i, v in res.cond_pairs:
        ref_mask &= ((states >> i) & 1) == v

    probs = d.probabilities
    if kind == "additive":
        with np.errstate(divide="ignore"):
            logp = np.log(np.maximum(probs, 1e-300))
        plogp = np.where(probs > 0, probs * logp, 0.0)

    cell_terms = []
    for cell in range(1 << n):
        sel = ref_mask.copy()
        for t, v in _cell_target_pairs(res, cell):
            sel &= ((states >> t) & 1) == v
        q = float(probs[sel].sum())
        if q <= 0.0:
            raise ZeroCell(
                "zero-probability cell makes the interaction undefined",
                cells=[_cell_target_pairs(res, cell)],
            )
        if kind == "multiplicative":
            cell_terms.append(_cell_sign(cell, n) * math.log(q))
        elif kind == "additive":
            mean = float(plogp[sel].sum()) / q
            cell_terms.append(_cell_sign(cell, n) * mean)
        else:
            raise ValueError(f"unknown interaction kind {kind!r}")
    total = math.fsum(cell_terms)
    return math.exp(total) if kind == "multiplicative" else total
