"""Certification of the divergence bounds behind the coupled construction.

Everything here either computes an exact quantity by enumeration (conditional
column laws, joint graph laws at tiny scale, hypergeometric expectations,
union-bound tails) or evaluates a closed-form bound and pairs it with the
exact value so the inequality can be checked instance by instance.
"""

from __future__ import annotations

import itertools
import math
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from math import comb

import numpy as np

from .graph_model import (
    AdversarySpec,
    AssignmentState,
    PlantedInstance,
    bowtie,
    gen_classical,
    gen_coupled,
    gen_semirandom,
    grid_rate,
    is_prime,
    line_rate,
    stream,
    stream_seed,
)
from .perturbed_bernoulli import (
    PBSpec,
    bernoulli_lift,
    kl_exact,
    superset_sum,
    _popcounts,
)
from .recovery import DEFAULT_BUDGET, jaccard, recover, refine_and_select


# ---------------------------------------------------------------------------
# Conditional column laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ColumnLaw:
    """Exact law of the clique column for the next vertex, with the integer
    ingredients needed for rational identity checks.

    ``pi`` holds the per-coordinate singleton superset rates; ``counts`` the
    prior occupancy against each coordinate; ``sigma_counts`` the exact
    integer numerators of the subset masses over ``denominator``.
    """

    spec: PBSpec
    pi: tuple[float, ...]
    counts: tuple[int, ...]
    denominator: int
    sigma_counts: dict[int, int]
    pi_full: tuple[float, ...] | None = None


def column_law_grid(state: AssignmentState) -> ColumnLaw:
    """Column law in grid mode: at most one coordinate is perturbed, the one
    whose grid column the fresh point lands in.

    pi_j = (m - 1 - N(b_j)) / (m^2 - m - d) with N the prior occupancy of
    column b_j and d the number of prior assignments.
    """
    if state.mode != "grid":
        raise ValueError("state is not in grid mode")
    m = state.m
    s = len(state.clique_points)
    d = len(state.prior_points)
    denom = m * m - m - d
    if denom <= 0:
        raise ValueError("no unused off-row points remain")
    occupancy = Counter(b for _, b in state.prior_points)
    counts = tuple(occupancy.get(cp[1], 0) for cp in state.clique_points)
    numerators = [m - 1 - c for c in counts]
    sigma_counts = {1 << j: numerators[j] for j in range(s) if numerators[j]}
    sigma_counts[0] = denom - sum(numerators)
    spec = PBSpec(
        s=s, q=state.q, sigma={mask: c / denom for mask, c in sigma_counts.items()}
    )
    pi_full = tuple((m - 1 - occupancy.get(col, 0)) / denom for col in range(m))
    return ColumnLaw(
        spec=spec,
        pi=tuple(v / denom for v in numerators),
        counts=counts,
        denominator=denom,
        sigma_counts=sigma_counts,
        pi_full=pi_full,
    )


def column_law_lines(state: AssignmentState) -> ColumnLaw:
    """Column law in line mode, by full enumeration of the unused
    off-line points: sigma(J) is the fraction of candidates whose slope
    lines hit exactly the clique coordinates J."""
    if state.mode != "lines":
        raise ValueError("state is not in line mode")
    cands = state.unused_candidates()
    if not cands:
        raise ValueError("no unused off-line points remain")
    denom = len(cands)
    sigma_counts = dict(Counter(state.perturb_mask(p) for p in cands))
    s = len(state.clique_points)
    counts = tuple(
        sum(
            1
            for p in state.prior_points
            if bowtie(p, cp, state.m, state.k)
        )
        for cp in state.clique_points
    )
    singles = [0] * s
    for mask, c in sigma_counts.items():
        for j in range(s):
            if mask >> j & 1:
                singles[j] += c
    spec = PBSpec(
        s=s, q=state.q, sigma={mask: c / denom for mask, c in sigma_counts.items()}
    )
    return ColumnLaw(
        spec=spec,
        pi=tuple(c / denom for c in singles),
        counts=counts,
        denominator=denom,
        sigma_counts=sigma_counts,
    )


def random_prefix_state(
    rng: np.random.Generator, mode: str, m: int, k: int, s: int, d: int
) -> AssignmentState:
    """Random planted structure plus d uniformly drawn prior points, i.e. a
    null-law prefix of length d."""
    if mode == "grid":
        q = grid_rate(m)
        planted = (0, 0)
        k = 2
        bvals = rng.permutation(m)[:s]
        cpts = tuple((0, int(b)) for b in bvals)
    elif mode == "lines":
        q = line_rate(m, k)
        rstar = int(rng.integers(k))
        hstar = int(rng.integers(m))
        planted = (rstar, hstar)
        bvals = rng.permutation(m)[:s]
        cpts = tuple(((hstar + rstar * int(b)) % m, int(b)) for b in bvals)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    state = AssignmentState(
        mode=mode, m=m, k=k, q=q, planted=planted, clique_points=cpts
    )
    cands = state.unused_candidates()
    if d > len(cands):
        raise ValueError(f"prefix length {d} exceeds {len(cands)} candidates")
    for idx in rng.permutation(len(cands))[:d]:
        state = state.with_point(cands[int(idx)])
    return state


# ---------------------------------------------------------------------------
# Local bounds
# ---------------------------------------------------------------------------


_REFERENCE_CACHE: dict[tuple[float, int], PBSpec] = {}


def reference_law(q: float, s: int) -> PBSpec:
    """Fair-coin column law materialized at base rate q, so the closed-form
    bound's shared-rate precondition holds."""
    key = (q, s)
    if key not in _REFERENCE_CACHE:
        _REFERENCE_CACHE[key] = bernoulli_lift(q, 0.5, s)
    return _REFERENCE_CACHE[key]


def kl_local_bound_grid(law: ColumnLaw, m: int) -> float:
    """Grid-mode bound on the column KL against fair coins:
    3 s^2 / (m-2)^4 + 3 sum_j (pi_j - 1/m)^2, valid for s <= m - 6."""
    s = len(law.pi)
    if s > m - 6:
        raise ValueError(f"grid bound needs s <= m - 6, got s={s}, m={m}")
    drift = sum((p - 1.0 / m) ** 2 for p in law.pi)
    return 3.0 * s * s / (m - 2) ** 4 + 3.0 * drift


def kl_local_bound_lines(law: ColumnLaw, n: int, m: int, k: int) -> float:
    """Line-mode bound on the column KL against fair coins:

    3 sum_j (S({j}) - (k-1)/m)^2 + 12 k^4 s^2 / m^4
        + (12 k^2 / m^2) * sum_{|J| >= 2} S(J)

    valid for k <= m/4, s <= m/(2k) - 4, n <= m(m-1)/2.
    """
    s = len(law.pi)
    if 4 * k > m:
        raise ValueError(f"line bound needs k <= m/4, got k={k}, m={m}")
    if 2 * k * (s + 4) > m:
        raise ValueError(f"line bound needs s <= m/(2k) - 4, got s={s}, m={m}, k={k}")
    if 2 * n > m * (m - 1):
        raise ValueError(f"line bound needs n <= m(m-1)/2, got n={n}, m={m}")
    stats = superset_sum(law.spec)
    pops = _popcounts(law.spec.s)
    tail = float(stats.values[pops >= 2].sum())
    target = (k - 1) / m
    drift = sum((p - target) ** 2 for p in law.pi)
    return (
        3.0 * drift
        + 12.0 * k**4 * s * s / m**4
        + 12.0 * k**2 / m**2 * tail
    )


def pair_tail_mass(law: ColumnLaw) -> float:
    """sum over |J| >= 2 of S(J); equals sum_J (2^|J| - |J| - 1) sigma(J)."""
    stats = superset_sum(law.spec)
    pops = _popcounts(law.spec.s)
    return float(stats.values[pops >= 2].sum())


# ---------------------------------------------------------------------------
# Chained bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundLedger:
    """Per-column and aggregate comparison of exact KL against its bound."""

    mode: str
    n: int
    m: int
    k: int
    s: int
    trials: int
    seed: int
    column_index: tuple[int, ...]
    per_column_exact: tuple[float, ...]
    per_column_bound: tuple[float, ...]
    chained_exact: float
    chained_exact_stderr: float
    chained_bound: float
    chained_bound_stderr: float
    closed_form_terms: dict[str, float]
    closed_form_total: float
    hypotheses: dict[str, bool]
    tv_pinsker: float


def closed_form_chain_terms(
    mode: str, n: int, m: int, k: int, s: int
) -> tuple[dict[str, float], dict[str, bool]]:
    """Explicit constituent sums of the chained closed-form bound, plus the
    hypotheses under which each aggregation step is justified."""
    if mode == "grid":
        terms = {
            "column_tail": 3.0 * s * s * n / (m - 2) ** 4,
            "occupancy_variance": 6.0 * s * n * n / m**5,
        }
        hyp = {"s_le_m_minus_6": s <= m - 6, "m2_ge_7n": m * m >= 7 * n}
    elif mode == "lines":
        terms = {
            "reference_tail": 12.0 * k**4 * s * s * n / m**4,
            "design_tail": 48.0 * k**4 * s * s * n / m**4,
            "occupancy_variance": 12.0 * k**3 * s * n * n / m**5,
        }
        hyp = {
            "k_le_m_over_4": 4 * k <= m,
            "s_le_m_over_2k_minus_4": 2 * k * (s + 4) <= m,
            "n_plus_m_le_m2_over_2": 2 * (n + m) <= m * m,
            "hg_tail": 2 * (k - 1) * s <= m,
        }
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return terms, hyp


def chained_kl_bound(
    n: int,
    m: int,
    k: int,
    s: int,
    trials: int,
    seed: int,
    mode: str = "grid",
) -> BoundLedger:
    """Monte Carlo estimate, over null-law assignment prefixes, of the summed
    per-column exact KL and of the summed per-column bound, next to the
    closed-form aggregate.

    Exact and bound are evaluated on the same sampled prefixes, so the
    entrywise inequality is inherited by the estimates.
    """
    if trials < 2:
        raise ValueError("need at least 2 trials for a standard error")
    if not 1 <= s < n:
        raise ValueError(f"need 1 <= s < n, got s={s}, n={n}")
    if s > m:
        raise ValueError(f"need s <= m, got s={s}, m={m}")
    cols = n - s
    per_exact = np.zeros((trials, cols))
    per_bound = np.zeros((trials, cols))
    for t in range(trials):
        rng = stream(seed, "chain", t)
        state = random_prefix_state(rng, mode, m, k, s, 0)
        cands = state.unused_candidates()
        if cols - 1 > len(cands):
            raise ValueError("not enough off-structure points for the prefix")
        ref = reference_law(state.q, s)
        for idx in range(cols):
            if mode == "grid":
                law = column_law_grid(state)
                per_bound[t, idx] = kl_local_bound_grid(law, m)
            else:
                law = column_law_lines(state)
                per_bound[t, idx] = kl_local_bound_lines(law, n, m, k)
            per_exact[t, idx] = kl_exact(law.spec, ref)
            if idx < cols - 1:
                pick = cands.pop(int(rng.integers(len(cands))))
                state = state.with_point(pick)
    totals_exact = per_exact.sum(axis=1)
    totals_bound = per_bound.sum(axis=1)
    terms, hyp = closed_form_chain_terms(mode, n, m, k, s)
    total = sum(terms.values())
    return BoundLedger(
        mode=mode,
        n=n,
        m=m,
        k=k,
        s=s,
        trials=trials,
        seed=seed,
        column_index=tuple(range(s + 1, n + 1)),
        per_column_exact=tuple(per_exact.mean(axis=0)),
        per_column_bound=tuple(per_bound.mean(axis=0)),
        chained_exact=float(totals_exact.mean()),
        chained_exact_stderr=float(totals_exact.std(ddof=1) / math.sqrt(trials)),
        chained_bound=float(totals_bound.mean()),
        chained_bound_stderr=float(totals_bound.std(ddof=1) / math.sqrt(trials)),
        closed_form_terms=terms,
        closed_form_total=total,
        hypotheses=hyp,
        tv_pinsker=tv_from_kl(total),
    )


# ---------------------------------------------------------------------------
# Exact joint laws at tiny scale
# ---------------------------------------------------------------------------


_MAX_ASSIGNMENTS = 4_000_000


def _falling(total: int, take: int) -> int:
    out = 1
    for t in range(take):
        out *= total - t
    return out


def hg_pmf(count: int, draws: int, marked: int, total: int) -> float:
    """P[HG(draws, marked, total) = count], exact rational then rounded."""
    if count < 0 or count > draws:
        return 0.0
    num = comb(marked, count) * comb(total - marked, draws - count)
    if num == 0:
        return 0.0
    return float(Fraction(num, comb(total, draws)))


def _pairs(n: int) -> tuple[list[tuple[int, int]], dict[tuple[int, int], int]]:
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return pairs, {p: r for r, p in enumerate(pairs)}


def _bitcount_table(nbits: int) -> np.ndarray:
    arr = np.arange(1 << nbits, dtype=np.int64)
    out = np.zeros(1 << nbits, dtype=np.int64)
    for b in range(nbits):
        out += (arr >> b) & 1
    return out


def _mode_rate(m: int, mode: str, k: int) -> float:
    if mode == "grid":
        return grid_rate(m)
    if mode == "lines":
        if not is_prime(m):
            raise ValueError(f"line mode needs prime m, got {m}")
        q = line_rate(m, k)
        if q <= 0.0:
            raise ValueError(f"line rate not positive for m={m}, k={k}")
        return q
    raise ValueError(f"unknown mode {mode!r}")


def _related(p: tuple[int, int], r: tuple[int, int], m: int, mode: str, k: int) -> bool:
    if mode == "grid":
        return p != r and (p[0] == r[0] or p[1] == r[1])
    return p != r and bowtie(p, r, m, k)


def exact_null_law(n: int, m: int, mode: str = "grid", k: int = 2) -> np.ndarray:
    """Exact null graph law over all 2^C(n,2) graphs, by summing over every
    ordered distinct point assignment."""
    q = _mode_rate(m, mode, k)
    if n > m * m:
        raise ValueError(f"need n <= m^2, got n={n}, m={m}")
    total = _falling(m * m, n)
    if total > _MAX_ASSIGNMENTS:
        raise ValueError(f"state space too large: {total} assignments")
    pts = [(a, b) for a in range(m) for b in range(m)]
    rel = [
        [_related(p, r, m, mode, k) for r in pts]
        for p in pts
    ]
    pairs, _ = _pairs(n)
    npairs = len(pairs)
    forced_tally: Counter[int] = Counter()
    for assign in itertools.permutations(range(m * m), n):
        f = 0
        for bit, (i, j) in enumerate(pairs):
            if rel[assign[i]][assign[j]]:
                f |= 1 << bit
        forced_tally[f] += 1
    graphs = np.arange(1 << npairs, dtype=np.int64)
    pop = _bitcount_table(npairs)
    vec = np.zeros(1 << npairs)
    for f, c in forced_tally.items():
        has = (graphs & f) == f
        fpop = f.bit_count()
        ones = pop[has] - fpop
        vec[has] += (c / total) * q**ones * (1.0 - q) ** (npairs - fpop - ones)
    return vec


def _column_likelihoods(
    off_pts: list[tuple[int, int]],
    clique_pts: tuple[tuple[int, int], ...],
    m: int,
    mode: str,
    k: int,
    q: float,
) -> dict[tuple[int, int], np.ndarray]:
    """Per candidate point, the likelihood of every possible clique column."""
    s = len(clique_pts)
    cspace = np.arange(1 << s, dtype=np.int64)
    cpop = _bitcount_table(s)
    tables = {}
    for p in off_pts:
        jmask = 0
        for j, cp in enumerate(clique_pts):
            related = (
                cp[1] == p[1] if mode == "grid" else bowtie(p, cp, m, k)
            )
            if related:
                jmask |= 1 << j
        ok = (cspace & jmask) == jmask
        free_ones = cpop[cspace & ~jmask]
        free = s - jmask.bit_count()
        tables[p] = np.where(
            ok, q**free_ones * (1.0 - q) ** (free - free_ones), 0.0
        )
    return tables


def exact_coupled_law(
    n: int,
    m: int,
    mode: str = "grid",
    k: int = 2,
    size_range: tuple[int, int] | None = None,
) -> np.ndarray:
    """Exact coupled graph law: planted structure, hypergeometric clique
    size, fair-coin columns, and column-conditioned point assignments.

    Columns with no compatible candidate (null-probability events) fall back
    to a uniform point draw, keeping the law normalized.  ``size_range``
    restricts the clique-size branches; the returned vector then sums to the
    probability of that window (renormalize for the conditioned law).
    """
    q = _mode_rate(m, mode, k)
    if n > m * m:
        raise ValueError(f"need n <= m^2, got n={n}, m={m}")
    if _falling(m * m - m, n) > _MAX_ASSIGNMENTS:
        raise ValueError("state space too large")
    pairs, rank = _pairs(n)
    npairs = len(pairs)
    graphs = np.arange(1 << npairs, dtype=np.int64)
    vec = np.zeros(1 << npairs)
    size_lo, size_hi = size_range if size_range is not None else (0, n)

    # translations take any planted offset to 0 while preserving the slope
    # relation, so only the slope of the planted line needs enumerating
    slopes = [0] if mode == "grid" else list(range(k))
    slope_weight = 1.0 / len(slopes)

    extraction_cache: dict[tuple[int, ...], tuple] = {}

    for rstar in slopes:
        if mode == "grid":
            line_pts = [(0, b) for b in range(m)]
        else:
            line_pts = [((rstar * b) % m, b) for b in range(m)]
        on_line = set(line_pts)
        off_pts = [
            (a, b) for a in range(m) for b in range(m) if (a, b) not in on_line
        ]
        for s in range(0, min(n, m) + 1):
            if not size_lo <= s <= size_hi:
                continue
            ps = hg_pmf(s, n, m, m * m)
            if ps == 0.0 or n - s > len(off_pts):
                continue
            for S in itertools.combinations(range(n), s):
                key = S
                if key not in extraction_cache:
                    extraction_cache[key] = _extraction_arrays(
                        graphs, n, S, rank
                    )
                c_idx, nn_idx, ss_ok, nn_pairs = extraction_cache[key]
                r = n - s
                base = (
                    slope_weight * ps / comb(n, s) / _falling(m, s) * 0.5 ** (r * s)
                )
                mtot = np.zeros((1 << (r * s), 1 << len(nn_pairs)))
                nonS = [u for u in range(n) if u not in set(S)]
                for spts in itertools.permutations(line_pts, s):
                    tables = _column_likelihoods(off_pts, spts, m, mode, k, q)
                    _accumulate_tuples(
                        mtot,
                        off_pts,
                        tables,
                        r,
                        s,
                        base,
                        nn_pairs,
                        m,
                        mode,
                        k,
                        q,
                    )
                vec += np.where(ss_ok, mtot[c_idx, nn_idx], 0.0)
    return vec


def _extraction_arrays(graphs, n, S, rank):
    Ss = sorted(S)
    inS = set(S)
    nonS = [u for u in range(n) if u not in inS]
    s, r = len(Ss), len(nonS)
    c_idx = np.zeros(graphs.size, dtype=np.int64)
    for l, i in enumerate(nonS):
        for j, u in enumerate(Ss):
            p = rank[(min(i, u), max(i, u))]
            c_idx += ((graphs >> p) & 1) << (l * s + j)
    nn_pairs = [(l1, l2) for l1 in range(r) for l2 in range(l1 + 1, r)]
    nn_idx = np.zeros(graphs.size, dtype=np.int64)
    for bit, (l1, l2) in enumerate(nn_pairs):
        i, j = nonS[l1], nonS[l2]
        p = rank[(min(i, j), max(i, j))]
        nn_idx += ((graphs >> p) & 1) << bit
    ss_ok = np.ones(graphs.size, dtype=bool)
    for j1 in range(s):
        for j2 in range(j1 + 1, s):
            p = rank[(Ss[j1], Ss[j2])]
            ss_ok &= ((graphs >> p) & 1) == 1
    return c_idx, nn_idx, ss_ok, nn_pairs


def _accumulate_tuples(mtot, off_pts, tables, r, s, base, nn_pairs, m, mode, k, q):
    """DFS over ordered off-point tuples; adds each tuple's joint
    (columns, outside-completion) weight into mtot."""
    nnbits = len(nn_pairs)
    nn_graphs = np.arange(1 << nnbits, dtype=np.int64)
    nn_pop = _bitcount_table(nnbits)
    csize = 1 << s

    def completion(points):
        f = 0
        for bit, (l1, l2) in enumerate(nn_pairs):
            if _related(points[l1], points[l2], m, mode, k):
                f |= 1 << bit
        has = (nn_graphs & f) == f
        fpop = f.bit_count()
        ones = nn_pop[has] - fpop
        g = np.zeros(1 << nnbits)
        g[has] = q**ones * (1.0 - q) ** (nnbits - fpop - ones)
        return g

    def dfs(used: list, acc: np.ndarray):
        level = len(used)
        if level == r:
            mtot[:, :] += (base * acc)[:, None] * completion(used)[None, :]
            return
        cands = [p for p in off_pts if p not in used]
        norm = np.zeros(csize)
        for p in cands:
            norm += tables[p]
        fallback = 1.0 / len(cands)
        safe = np.where(norm > 0.0, norm, 1.0)
        for p in cands:
            cond = np.where(norm > 0.0, tables[p] / safe, fallback)
            grown = (cond[:, None] * acc[None, :]).ravel() if level else cond
            dfs(used + [p], grown)

    dfs([], np.ones(1))


def exact_joint_kl(n: int, m: int, mode: str = "grid", k: int = 2) -> float:
    """KL between the exact null and coupled graph laws, both enumerated."""
    p0 = exact_null_law(n, m, mode, k)
    p1 = exact_coupled_law(n, m, mode, k)
    for name, vec in (("null", p0), ("coupled", p1)):
        mass = vec.sum()
        if abs(mass - 1.0) > 1e-9:
            raise AssertionError(f"{name} law sums to {mass!r}")
    live = p0 > 0.0
    if np.any(live & (p1 <= 0.0)):
        return math.inf
    return float(np.sum(p0[live] * np.log(p0[live] / p1[live])))


def exact_chain_rhs(n: int, m: int, mode: str = "grid", k: int = 2) -> float:
    """Exhaustive chained bound: E_s sum_i E_prefix[column KL], with the
    prefix expectation enumerated exactly."""
    q = _mode_rate(m, mode, k)
    total = 0.0
    for s in range(1, min(n, m) + 1):
        ps = hg_pmf(s, n, m, m * m)
        if ps == 0.0:
            continue
        ref = reference_law(q, s)
        if mode == "grid":
            level = sum(
                _expected_grid_column_kl(s, d, m, q, ref) for d in range(n - s)
            )
        else:
            level = sum(
                _expected_line_column_kl(s, d, m, k, q, ref) for d in range(n - s)
            )
        total += ps * level
    return total


def _expected_grid_column_kl(s, d, m, q, ref) -> float:
    """E over prior occupancy counts (multivariate hypergeometric) of the
    exact column KL, grid mode."""
    off = m * m - m
    rest = off - s * (m - 1)
    denom = off - d
    total_ways = comb(off, d)
    out = 0.0

    def rec(j, left, ways, counts):
        nonlocal out
        if j == s:
            ways_total = ways * comb(rest, left)
            if ways_total == 0:
                return
            prob = ways_total / total_ways
            numer = [m - 1 - c for c in counts]
            sigma = {1 << jj: numer[jj] / denom for jj in range(s) if numer[jj]}
            sigma[0] = (denom - sum(numer)) / denom
            spec = PBSpec(s=s, q=q, sigma=sigma)
            out += prob * kl_exact(spec, ref)
            return
        for x in range(0, min(m - 1, left) + 1):
            rec(j + 1, left - x, ways * comb(m - 1, x), counts + [x])

    rec(0, d, 1, [])
    return out


def _expected_line_column_kl(s, d, m, k, q, ref) -> float:
    """E over planted slope, clique point subsets, and prior point subsets of
    the exact column KL, line mode (full enumeration; tiny m only)."""
    off = m * m - m
    if comb(m, s) * comb(off, d) * (1 << s) > 2_000_000:
        raise ValueError("state space too large for the line chain enumeration")
    out = 0.0
    for rstar in range(k):
        line_pts = [((rstar * b) % m, b) for b in range(m)]
        on_line = set(line_pts)
        off_pts = [
            (a, b) for a in range(m) for b in range(m) if (a, b) not in on_line
        ]
        acc = 0.0
        n_s = comb(m, s)
        n_p = comb(off, d)
        for spts in itertools.combinations(line_pts, s):
            base = AssignmentState(
                mode="lines",
                m=m,
                k=k,
                q=q,
                planted=(rstar, 0),
                clique_points=tuple(spts),
            )
            for priors in itertools.combinations(off_pts, d):
                state = base
                for p in priors:
                    state = state.with_point(p)
                law = column_law_lines(state)
                acc += kl_exact(law.spec, ref)
        out += acc / (n_s * n_p)
    return out / k


# ---------------------------------------------------------------------------
# Hypergeometric expectations and Pinsker
# ---------------------------------------------------------------------------


def hg_expectation(draws: int, marked: int, total: int) -> float:
    """Exact E[2^I - I - 1] for I ~ HG(draws, marked, total), by rational
    summation of the pmf."""
    if not 0 <= draws <= total:
        raise ValueError(f"need 0 <= draws <= total, got draws={draws}, total={total}")
    if not 0 <= marked <= total:
        raise ValueError(f"need 0 <= marked <= total, got marked={marked}, total={total}")
    denom = comb(total, draws)
    acc = Fraction(0)
    for i in range(max(0, draws + marked - total), min(draws, marked) + 1):
        ways = comb(marked, i) * comb(total - marked, draws - i)
        acc += Fraction(ways, denom) * ((1 << i) - i - 1)
    return float(acc)


def hg_bound(k: int, s: int, m: int) -> float:
    """Closed-form cap 4 k^2 s^2 / m^2 on E[2^I - I - 1] for
    I ~ HG(k-1, s, m); requires 2(k-1)s <= m."""
    if 2 * (k - 1) * s > m:
        raise ValueError(f"bound needs 2(k-1)s <= m, got k={k}, s={s}, m={m}")
    return 4.0 * k * k * s * s / (m * m)


def tv_from_kl(kl: float) -> float:
    """Total-variation cap from a KL budget: min(1, sqrt(kl/2))."""
    if kl < 0.0:
        raise ValueError(f"KL must be nonnegative, got {kl}")
    return min(1.0, math.sqrt(kl / 2.0))


# ---------------------------------------------------------------------------
# Jaccard experiments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentResult:
    model: str
    estimator: str
    trials: int
    seed: int
    params: dict
    values: tuple[float, ...]
    runtimes: tuple[float, ...]

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def ci95(self) -> float:
        if self.trials < 2:
            return math.inf
        return 1.96 * float(np.std(self.values, ddof=1)) / math.sqrt(self.trials)


def oracle_line_pick(instance: PlantedInstance, rng: np.random.Generator) -> frozenset[int]:
    """Pick one of the revealed vertex's latent line cliques uniformly."""
    cfg = instance.grid
    if cfg is None or cfg.planted_line is None:
        raise ValueError("instance carries no planted grid structure")
    av, bv = cfg.points[instance.revealed]
    r = int(rng.integers(cfg.k))
    return frozenset(
        u
        for u, (a, b) in enumerate(cfg.points)
        if (a - av - r * (b - bv)) % cfg.m == 0
    )


def _corrupted_candidates(
    instance: PlantedInstance, rng: np.random.Generator, copies: int = 3
) -> list[frozenset[int]]:
    """Test double for an external candidate source: copies of the planted
    set, each perturbed within symmetric difference s/8 (the corruption the
    degree threshold tolerates)."""
    members = sorted(instance.clique)
    outside = sorted(set(range(instance.graph.n)) - instance.clique)
    flips = max(1, len(members) // 16)
    out = []
    for _ in range(copies):
        drop = rng.choice(len(members), size=min(flips, len(members)), replace=False)
        add = rng.choice(len(outside), size=min(flips, len(outside)), replace=False)
        cand = set(members)
        for idx in drop:
            cand.discard(members[int(idx)])
        for idx in add:
            cand.add(outside[int(idx)])
        out.append(frozenset(cand))
    return out


def _estimate(instance: PlantedInstance, estimator: str, tseed: int, budget: int):
    if estimator == "recover":
        return recover(
            instance.graph, instance.revealed, len(instance.clique), budget=budget
        ).vertices
    if estimator == "oracle-line":
        return oracle_line_pick(instance, stream(tseed, "oracle"))
    if estimator == "refine-oracle":
        cands = _corrupted_candidates(instance, stream(tseed, "candidates"))
        return refine_and_select(
            instance.graph, cands, instance.revealed, len(instance.clique)
        )
    if estimator == "empty":
        return frozenset()
    raise ValueError(f"unknown estimator {estimator!r}")


def _conditioned_coupled(seed: int, t: int, n: int, m: int, k: int):
    """Coupled instance conditioned on the clique size window
    [n/2m, 2n/m]; out-of-window draws are rejected and redrawn from the
    next attempt substream."""
    lo, hi = n / (2.0 * m), 2.0 * n / m
    attempt = 0
    while True:
        tseed = stream_seed(seed, "trial", t, attempt)
        inst = gen_coupled(n, m, k, tseed)
        if lo <= len(inst.clique) <= hi:
            return inst, tseed
        attempt += 1


def _experiment_trial(args) -> tuple[int, float, float]:
    (model, estimator, seed, t, n, s, m, k, adversary, budget) = args
    tseed = stream_seed(seed, "trial", t)
    start = time.perf_counter()
    if model == "classical":
        inst = gen_classical(n, s, tseed)
    elif model == "semirandom":
        inst = gen_semirandom(n, s, AdversarySpec.parse(adversary), tseed)
    elif model == "coupled":
        inst, tseed = _conditioned_coupled(seed, t, n, m, k)
    else:
        raise ValueError(f"unknown model {model!r}")
    guess = _estimate(inst, estimator, tseed, budget)
    value = jaccard(guess, inst.clique)
    return t, value, time.perf_counter() - start


def jaccard_experiment(
    model: str,
    estimator: str,
    trials: int,
    seed: int,
    *,
    n: int,
    s: int | None = None,
    m: int | None = None,
    k: int | None = None,
    adversary: str = "empty",
    budget: int = DEFAULT_BUDGET,
    threads: int = 1,
) -> ExperimentResult:
    """Seeded trials of (generate instance, estimate clique, score Jaccard).

    Trials derive independent substreams from (seed, trial index), so the
    result is identical for any thread count; outputs are ordered by trial
    index.
    """
    args = [
        (model, estimator, seed, t, n, s, m, k, adversary, budget)
        for t in range(trials)
    ]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_experiment_trial, args))
    else:
        rows = [_experiment_trial(a) for a in args]
    rows.sort(key=lambda r: r[0])
    params = {"n": n, "s": s, "m": m, "k": k, "adversary": adversary}
    return ExperimentResult(
        model=model,
        estimator=estimator,
        trials=trials,
        seed=seed,
        params={key: val for key, val in params.items() if val is not None},
        values=tuple(r[1] for r in rows),
        runtimes=tuple(r[2] for r in rows),
    )
