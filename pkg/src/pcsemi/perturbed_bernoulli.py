"""Perturbed Bernoulli distributions.

A perturbed Bernoulli law ``PB(q, sigma)`` over binary vectors in {0,1}^s is
sampled by drawing s independent Ber(q) coordinates, drawing a subset J of
{1..s} with probability sigma(J), and forcing the coordinates in J to one.
Subsets are encoded as bit masks: bit ``j`` set means coordinate ``j+1``
belongs to the subset, so mask 0 is the empty set.

Provided here: the exact pmf in two algebraically distinct forms (the direct
sum over perturbations and a signed product form driven by superset
statistics), a sampler, the subset-lattice zeta/Moebius transforms, exact KL
and chi-squared divergences by full state enumeration (s <= 20), and a
closed-form KL upper bound expressed through the superset statistics
``S(J) = sum_{J' >= J} sigma(J')``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

MAX_DIM = 20
IDENTITY_TOL = 1e-12
INEQUALITY_TOL = 1e-9


def _validate_dim(s: int) -> None:
    if not 1 <= s <= MAX_DIM:
        raise ValueError(f"dimension s={s} outside [1, {MAX_DIM}]")


@dataclass(frozen=True)
class PBSpec:
    """A perturbed Bernoulli distribution: base rate plus sparse subset masses.

    ``sigma`` maps subset bit masks to probability masses; absent masks carry
    mass exactly zero.  Masses must be nonnegative and sum to one within
    1e-12.
    """

    s: int
    q: float
    sigma: Mapping[int, float]

    def __post_init__(self):
        _validate_dim(self.s)
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"base rate q={self.q} outside [0, 1]")
        clean = {}
        total = 0.0
        for mask, mass in self.sigma.items():
            mask = int(mask)
            if not 0 <= mask < (1 << self.s):
                raise ValueError(f"mask {mask} is not a subset of 1..{self.s}")
            if mass < 0.0:
                raise ValueError(f"negative mass {mass} at mask {mask}")
            clean[mask] = float(mass)
            total += mass
        if abs(total - 1.0) > IDENTITY_TOL:
            raise ValueError(f"masses sum to {total!r}, not 1")
        object.__setattr__(self, "sigma", clean)

    def mass(self, mask: int) -> float:
        return self.sigma.get(mask, 0.0)

    def to_json(self) -> dict:
        """Flat record with 1-based sorted index sets, for file interchange."""
        entries = []
        for mask in sorted(self.sigma):
            idx = [j + 1 for j in range(self.s) if mask >> j & 1]
            entries.append({"set": idx, "mass": self.sigma[mask]})
        return {"s": self.s, "q": self.q, "sigma": entries}

    @classmethod
    def from_json(cls, record: dict) -> "PBSpec":
        s = int(record["s"])
        sigma: dict[int, float] = {}
        for entry in record["sigma"]:
            mask = 0
            for j in entry["set"]:
                if not 1 <= int(j) <= s:
                    raise ValueError(f"index {j} outside 1..{s}")
                mask |= 1 << (int(j) - 1)
            sigma[mask] = sigma.get(mask, 0.0) + float(entry["mass"])
        return cls(s=s, q=float(record["q"]), sigma=sigma)


@dataclass(frozen=True)
class SupersetStats:
    """Dense table of superset sums S(J) = sum of sigma over supersets of J."""

    s: int
    values: np.ndarray = field(repr=False)

    def value(self, mask: int) -> float:
        return float(self.values[mask])

    def as_dict(self) -> dict[int, float]:
        return {m: float(v) for m, v in enumerate(self.values)}


@dataclass(frozen=True)
class DivergenceReport:
    """Exact divergences next to the closed-form bound and its slack."""

    kl_exact: float
    chi2_exact: float
    bound: float

    @property
    def slack(self) -> float:
        return self.bound - self.kl_exact


@lru_cache(maxsize=None)
def _popcounts(s: int) -> np.ndarray:
    return np.array([m.bit_count() for m in range(1 << s)], dtype=np.int64)


def _dense(spec: PBSpec) -> np.ndarray:
    arr = np.zeros(1 << spec.s)
    for mask, mass in spec.sigma.items():
        arr[mask] = mass
    return arr


def _zeta_subset(values: np.ndarray, s: int) -> np.ndarray:
    """out[x] = sum over y subset of x of values[y]."""
    out = values.copy()
    idx = np.arange(1 << s)
    for b in range(s):
        hi = (idx >> b) & 1 == 1
        out[hi] += out[idx[hi] ^ (1 << b)]
    return out


def _mobius_subset(values: np.ndarray, s: int) -> np.ndarray:
    out = values.copy()
    idx = np.arange(1 << s)
    for b in range(s):
        hi = (idx >> b) & 1 == 1
        out[hi] -= out[idx[hi] ^ (1 << b)]
    return out


def _zeta_superset(values: np.ndarray, s: int) -> np.ndarray:
    """out[x] = sum over y superset of x of values[y]."""
    out = values.copy()
    idx = np.arange(1 << s)
    for b in range(s):
        lo = (idx >> b) & 1 == 0
        out[lo] += out[idx[lo] | (1 << b)]
    return out


def _mobius_superset(values: np.ndarray, s: int) -> np.ndarray:
    out = values.copy()
    idx = np.arange(1 << s)
    for b in range(s):
        lo = (idx >> b) & 1 == 0
        out[lo] -= out[idx[lo] | (1 << b)]
    return out


def _as_mask(spec: PBSpec, x: Sequence[int]) -> int:
    xs = list(x)
    if len(xs) != spec.s:
        raise ValueError(f"vector length {len(xs)} != dimension {spec.s}")
    mask = 0
    for j, bit in enumerate(xs):
        if bit not in (0, 1):
            raise ValueError(f"coordinate {j + 1} is {bit!r}, not 0/1")
        mask |= int(bit) << j
    return mask


def pb_pmf(spec: PBSpec, x: Sequence[int]) -> float:
    """Exact pmf: sum over subsets J of sigma(J) * 1[x_J = 1] * prod of
    Bernoulli(q) factors on the coordinates outside J."""
    mask = _as_mask(spec, x)
    q, s = spec.q, spec.s
    total = 0.0
    for jmask, mass in spec.sigma.items():
        if mask & jmask != jmask:
            continue
        free = mask & ~jmask
        ones = free.bit_count()
        zeros = s - jmask.bit_count() - ones
        total += mass * q**ones * (1.0 - q) ** zeros
    return total


def pmf_vector(spec: PBSpec) -> np.ndarray:
    """Exact pmf over all 2^s states at once.

    The law is the coordinatewise OR of the Ber(q) vector with the random
    subset, so its subset-cumulative transform factorizes:
    P(X subset x) = P(Y subset x) * P(J subset x).  One zeta transform, a
    pointwise product, and one Moebius transform recover the pmf in
    O(s 2^s).
    """
    s, q = spec.s, spec.q
    z_sigma = _zeta_subset(_dense(spec), s)
    z_coins = (1.0 - q) ** (s - _popcounts(s))
    return _mobius_subset(z_sigma * z_coins, s)


def pb_pmf_fourier(spec: PBSpec, x: Sequence[int]) -> float:
    """Signed product form of the pmf, valid for q > 0:

    prod_j q^{x_j} (1-q)^{1-x_j} * sum_J S(J) prod_{j in J} (x_j/q - 1).
    """
    if spec.q <= 0.0:
        raise ValueError("q must be positive for the signed product form")
    mask = _as_mask(spec, x)
    return float(pmf_fourier_vector(spec)[mask])


def pmf_fourier_vector(spec: PBSpec) -> np.ndarray:
    """Vectorized signed product form over all states (q > 0).

    Contracts sum_J S(J) prod_{j in J} (x_j/q - 1) one coordinate at a time:
    each pass converts bit j of the array index from "j in J" to "value of
    x_j", so the whole table costs O(s 2^s).
    """
    s, q = spec.s, spec.q
    if q <= 0.0:
        raise ValueError("q must be positive for the signed product form")
    acc = np.asarray(superset_sum(spec).values, dtype=float).copy()
    factor_one = -1.0 + 1.0 / q  # coordinate in J, x_j = 1
    idx = np.arange(1 << s)
    for j in range(s):
        lo = idx[(idx >> j) & 1 == 0]
        hi = lo | (1 << j)
        absent, present = acc[lo], acc[hi]
        acc[lo] = absent - present
        acc[hi] = absent + factor_one * present
    pop = _popcounts(s)
    coins = q**pop * (1.0 - q) ** (s - pop)
    return coins * acc


def pb_sample(spec: PBSpec, rng: np.random.Generator) -> np.ndarray:
    """One draw: Ber(q) coins OR a sigma-distributed forced subset."""
    coins = rng.random(spec.s) < spec.q
    masks = sorted(spec.sigma)
    cum = np.cumsum([spec.sigma[m] for m in masks])
    u = rng.random() * cum[-1]
    jmask = masks[int(np.searchsorted(cum, u, side="right").clip(0, len(masks) - 1))]
    forced = np.array([(jmask >> j) & 1 for j in range(spec.s)], dtype=bool)
    return (coins | forced).astype(np.uint8)


def superset_sum(spec: PBSpec) -> SupersetStats:
    """All superset statistics S(J) via the superset zeta transform."""
    values = _zeta_superset(_dense(spec), spec.s)
    values.flags.writeable = False
    return SupersetStats(s=spec.s, values=values)


def mobius_invert(stats: SupersetStats) -> dict[int, float]:
    """Invert superset sums back to a mass map.

    Raises if the inversion produces a mass below -1e-9, which marks the
    input as not arising from a valid mass function; tiny negative dust from
    rounding (>= -1e-12 scale) is passed through untouched.
    """
    masses = _mobius_superset(np.asarray(stats.values, dtype=float), stats.s)
    low = masses.min()
    if low < -INEQUALITY_TOL:
        raise ValueError(f"inversion produced mass {low}, not a superset-sum table")
    return {m: float(v) for m, v in enumerate(masses) if v != 0.0}


def bernoulli_lift(q: float, q_prime: float, s: int) -> PBSpec:
    """Represent s independent Ber(q') coordinates as PB(q, sigma).

    Each coordinate is forced independently with probability
    (q'-q)/(1-q), giving sigma(J) = ((q'-q)/(1-q))^|J| ((1-q')/(1-q))^(s-|J|).
    """
    _validate_dim(s)
    if q >= 1.0:
        raise ValueError("q must be < 1 to lift")
    if not 0.0 <= q <= q_prime <= 1.0:
        raise ValueError(f"need 0 <= q <= q' <= 1, got q={q}, q'={q_prime}")
    p_force = (q_prime - q) / (1.0 - q)
    p_skip = (1.0 - q_prime) / (1.0 - q)
    sigma = {}
    for mask in range(1 << s):
        c = mask.bit_count()
        mass = p_force**c * p_skip ** (s - c)
        if mass != 0.0:
            sigma[mask] = mass
    return PBSpec(s=s, q=q, sigma=sigma)


def support_vector(spec: PBSpec) -> np.ndarray:
    """Exact support indicator over all 2^s states (no floating point)."""
    s, q = spec.s, spec.q
    carriers = np.zeros(1 << s)
    for mask, mass in spec.sigma.items():
        if mass > 0.0:
            carriers[mask] = 1.0
    if q == 0.0:
        return carriers > 0.0
    if q == 1.0:
        out = np.zeros(1 << s, dtype=bool)
        out[(1 << s) - 1] = carriers.sum() > 0.0
        return out
    return _zeta_subset(carriers, s) > 0.0


def _check_pair(a: PBSpec, b: PBSpec) -> None:
    if a.s != b.s:
        raise ValueError(f"dimension mismatch: {a.s} vs {b.s}")


def kl_exact(a: PBSpec, b: PBSpec) -> float:
    """Exact KL divergence by enumeration; +inf when a escapes b's support.

    Uses the convention 0 * ln 0 = 0.  Support is decided combinatorially,
    not from rounded pmf values, so the +inf sentinel is exact.
    """
    _check_pair(a, b)
    sup_a = support_vector(a)
    sup_b = support_vector(b)
    if np.any(sup_a & ~sup_b):
        return math.inf
    pa = np.where(sup_a, np.maximum(pmf_vector(a), 0.0), 0.0)
    pb = np.where(sup_b, np.maximum(pmf_vector(b), 1e-300), 0.0)
    live = pa > 0.0
    return float(np.sum(pa[live] * np.log(pa[live] / pb[live])))


def chi2_exact(a: PBSpec, b: PBSpec) -> float:
    """Exact chi-squared divergence sum_x (P_a - P_b)^2 / P_b, +inf sentinel
    on support escape.  Dominates kl_exact whenever both are finite."""
    _check_pair(a, b)
    sup_a = support_vector(a)
    sup_b = support_vector(b)
    if np.any(sup_a & ~sup_b):
        return math.inf
    pa = np.where(sup_a, np.maximum(pmf_vector(a), 0.0), 0.0)
    pb = np.where(sup_b, np.maximum(pmf_vector(b), 1e-300), 0.0)
    return float(np.sum((pa[sup_b] - pb[sup_b]) ** 2 / pb[sup_b]))


def kl_bound(a: PBSpec, b: PBSpec) -> float:
    """Closed-form upper bound on KL(a || b) for laws sharing a base rate:

    (1 / tau(empty)) * sum_J c(q)^|J| (S(J) - T(J))^2,
    c(q) = ((1-q)/q) * max(1, (1-q)/q)

    where S, T are the superset statistics of a and b.  For q <= 1/2 the
    coordinate factor is ((1-q)/q)^2, the classical even-power form; above
    1/2 that form is no longer an upper bound (each squared signed factor
    has second moment (1-q)/q under Ber(q), which exceeds its square), so
    the exact moment is used instead.  Requires identical q in (0, 1) and
    positive empty-set mass in b.
    """
    _check_pair(a, b)
    if a.q != b.q:
        raise ValueError(f"base rates differ: {a.q} vs {b.q}")
    q = a.q
    if not 0.0 < q < 1.0:
        raise ValueError(f"bound needs q in (0, 1), got {q}")
    tau0 = b.mass(0)
    if tau0 <= 0.0:
        raise ValueError("bound needs positive empty-set mass in the second law")
    s_stats = superset_sum(a).values
    t_stats = superset_sum(b).values
    ratio = (1.0 - q) / q
    weights = (ratio * max(1.0, ratio)) ** _popcounts(a.s)
    return float(np.dot(weights, (s_stats - t_stats) ** 2) / tau0)


def compare(a: PBSpec, b: PBSpec) -> DivergenceReport:
    """Exact divergences alongside the closed-form bound."""
    return DivergenceReport(
        kl_exact=kl_exact(a, b), chi2_exact=chi2_exact(a, b), bound=kl_bound(a, b)
    )


def random_spec(
    rng: np.random.Generator,
    s: int,
    q: float,
    max_support: int | None = None,
    include_empty: bool = False,
) -> PBSpec:
    """Random sparse PB law for property sweeps (support size <= s+1 by
    default, Dirichlet masses)."""
    _validate_dim(s)
    cap = min(max_support or (s + 1), 1 << s)
    size = int(rng.integers(1, cap + 1))
    masks = list(rng.choice(1 << s, size=size, replace=False))
    if include_empty and 0 not in masks:
        masks[0] = 0
        masks = list(dict.fromkeys(masks))
    weights = rng.dirichlet(np.ones(len(masks)))
    return PBSpec(s=s, q=q, sigma={int(m): float(w) for m, w in zip(masks, weights)})
