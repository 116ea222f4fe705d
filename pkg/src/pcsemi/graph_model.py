"""Graph generators: planted cliques, semi-random adversaries, and the
grid/line null constructions they are coupled to.

Vertices carry latent grid points (a, b) in [0, m) x [0, m).  In grid mode
two vertices are design-connected when they share a row or a column; in line
mode when some slope r in {0..k-1} aligns them, i.e.
a_i - a_j = r (b_i - b_j) (mod m) with m prime.  All remaining edges are
independent coins whose rate q is calibrated so that edges between a design
clique and a fresh vertex look exactly like fair coins.

Randomness: every generator derives named substreams from (seed, path) via a
counter-based Philox generator keyed by a blake2b hash, so identical seeds
give bit-identical instances and per-vertex streams are reproducible in any
order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

Point = tuple[int, int]


def stream(seed: int, *path) -> np.random.Generator:
    """Independent, reproducible substream keyed by (seed, path)."""
    h = hashlib.blake2b(digest_size=16)
    h.update(str(int(seed)).encode())
    for part in path:
        h.update(b"/")
        h.update(str(part).encode())
    key = np.frombuffer(h.digest(), dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def stream_seed(seed: int, *path) -> int:
    """63-bit derived seed, for handing to generators that want an int."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed)).encode())
    for part in path:
        h.update(b"/")
        h.update(str(part).encode())
    return int.from_bytes(h.digest(), "big") >> 1


def is_prime(m: int) -> bool:
    if m < 2:
        return False
    d = 2
    while d * d <= m:
        if m % d == 0:
            return False
        d += 1
    return True


def grid_rate(m: int) -> float:
    """Coin rate for the grid null model: 1/2 - 1/(2m-2)."""
    if m < 3:
        raise ValueError(f"grid mode needs m >= 3 (q > 0), got m={m}")
    return 0.5 - 1.0 / (2.0 * m - 2.0)


def line_rate(m: int, k: int) -> float:
    """Coin rate for the line null model: 1/2 - (k-1)/(2(m-k+1))."""
    return 0.5 - (k - 1) / (2.0 * (m - k + 1))


def bowtie(p: Point, r: Point, m: int, k: int) -> bool:
    """Whether some slope in {0..k-1} aligns the two grid points (mod m)."""
    da = p[0] - r[0]
    db = p[1] - r[1]
    return any((da - slope * db) % m == 0 for slope in range(k))


@dataclass(frozen=True)
class Graph:
    """Symmetric boolean adjacency with a zero diagonal."""

    n: int
    adj: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.asarray(self.adj, dtype=bool)
        if a.shape != (self.n, self.n):
            raise ValueError(f"adjacency shape {a.shape} != ({self.n}, {self.n})")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        if a.diagonal().any():
            raise ValueError("diagonal must be zero")
        a = a.copy()
        a.flags.writeable = False
        object.__setattr__(self, "adj", a)

    def edge(self, i: int, j: int) -> bool:
        return bool(self.adj[i, j])

    def edges(self) -> list[tuple[int, int]]:
        iu, ju = np.nonzero(np.triu(self.adj, 1))
        return sorted(zip(iu.tolist(), ju.tolist()))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        a = np.zeros((n, n), dtype=bool)
        for i, j in edges:
            if i == j:
                raise ValueError(f"self loop at {i}")
            a[i, j] = a[j, i] = True
        return cls(n=n, adj=a)


@dataclass(frozen=True)
class GridConfig:
    """Latent grid assignment behind a null or coupled instance."""

    mode: str  # "grid" | "lines"
    m: int
    k: int
    points: tuple[Point, ...]
    planted_line: tuple[int, int] | None
    q: float

    def __post_init__(self):
        if self.mode not in ("grid", "lines"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if len(set(self.points)) != len(self.points):
            raise ValueError("grid points must be distinct")


@dataclass(frozen=True)
class PlantedInstance:
    """A generated graph with its ground-truth clique and revealed vertex."""

    graph: Graph
    clique: frozenset[int]
    revealed: int
    model: str
    params: dict
    seed: int
    grid: GridConfig | None = None

    def __post_init__(self):
        if len(self.clique) < 1:
            raise ValueError("clique must be nonempty")
        if self.revealed not in self.clique:
            raise ValueError("revealed vertex must lie in the clique")
        members = sorted(self.clique)
        sub = self.graph.adj[np.ix_(members, members)]
        if not (sub | np.eye(len(members), dtype=bool)).all():
            raise ValueError("clique vertices are not fully connected")


@dataclass(frozen=True)
class AdversarySpec:
    """How the edges among non-clique vertices get filled in.

    Only pairs with both endpoints outside the planted set are touched.
    ``custom`` takes a deterministic rule (i, j) -> bool evaluated on those
    pairs alone, so it cannot reach clique-incident edges by construction.
    """

    kind: str
    p: float | None = None
    t: int | None = None
    rule: Callable[[int, int], bool] | None = None

    @classmethod
    def empty(cls) -> "AdversarySpec":
        return cls(kind="empty")

    @classmethod
    def random(cls, p: float) -> "AdversarySpec":
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"edge rate {p} outside [0, 1]")
        return cls(kind="random", p=p)

    @classmethod
    def extra_cliques(cls, t: int) -> "AdversarySpec":
        if t < 0:
            raise ValueError("number of extra cliques must be >= 0")
        return cls(kind="extra_cliques", t=t)

    @classmethod
    def custom(cls, rule: Callable[[int, int], bool]) -> "AdversarySpec":
        return cls(kind="custom", rule=rule)

    @classmethod
    def parse(cls, text: str) -> "AdversarySpec":
        """Parse CLI syntax: empty | random:<p> | extra_cliques:<t>."""
        name, _, arg = text.partition(":")
        if name == "empty":
            return cls.empty()
        if name == "random":
            return cls.random(float(arg))
        if name == "extra_cliques":
            return cls.extra_cliques(int(arg))
        raise ValueError(f"unknown adversary {text!r}")

    def label(self) -> str:
        if self.kind == "random":
            return f"random:{self.p}"
        if self.kind == "extra_cliques":
            return f"extra_cliques:{self.t}"
        return self.kind


def _sym_coin(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Symmetric i.i.d. Ber(p) matrix with zero diagonal."""
    u = rng.random((n, n))
    out = np.zeros((n, n), dtype=bool)
    iu = np.triu_indices(n, 1)
    out[iu] = u[iu] < p
    return out | out.T


def _choose_clique(n: int, s: int, seed: int) -> np.ndarray:
    return np.sort(stream(seed, "clique").choice(n, size=s, replace=False))


def _reveal(members: np.ndarray, seed: int) -> int:
    return int(members[stream(seed, "reveal").integers(len(members))])


def gen_classical(n: int, s: int, seed: int) -> PlantedInstance:
    """Classical planted clique: fair coins everywhere, one forced clique."""
    if not 1 <= s <= n:
        raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")
    members = _choose_clique(n, s, seed)
    adj = _sym_coin(n, 0.5, stream(seed, "edges"))
    adj[np.ix_(members, members)] = True
    np.fill_diagonal(adj, False)
    return PlantedInstance(
        graph=Graph(n=n, adj=adj),
        clique=frozenset(int(v) for v in members),
        revealed=_reveal(members, seed),
        model="classical",
        params={"n": n, "s": s},
        seed=seed,
    )


def gen_semirandom(
    n: int, s: int, adversary: AdversarySpec, seed: int
) -> PlantedInstance:
    """Planted clique with fair-coin cross edges and adversarial outside edges."""
    if not 1 <= s <= n:
        raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")
    members = _choose_clique(n, s, seed)
    inside = np.zeros(n, dtype=bool)
    inside[members] = True
    outside = np.flatnonzero(~inside)

    adj = np.zeros((n, n), dtype=bool)
    adj[np.ix_(members, members)] = True
    cross = _sym_coin(n, 0.5, stream(seed, "cross"))
    cross_mask = inside[:, None] ^ inside[None, :]
    adj[cross_mask] = cross[cross_mask]

    rng = stream(seed, "adversary")
    if adversary.kind == "empty":
        pass
    elif adversary.kind == "random":
        coins = _sym_coin(n, adversary.p, rng)
        out_mask = ~inside[:, None] & ~inside[None, :]
        adj[out_mask] = coins[out_mask]
    elif adversary.kind == "extra_cliques":
        t = adversary.t
        if t * s > len(outside):
            raise ValueError(
                f"extra_cliques({t}) needs {t * s} outside vertices, have {len(outside)}"
            )
        coins = _sym_coin(n, 0.5, rng)
        out_mask = ~inside[:, None] & ~inside[None, :]
        adj[out_mask] = coins[out_mask]
        order = rng.permutation(outside)
        for c in range(t):
            group = order[c * s : (c + 1) * s]
            adj[np.ix_(group, group)] = True
    elif adversary.kind == "custom":
        for ii in range(len(outside)):
            for jj in range(ii + 1, len(outside)):
                i, j = int(outside[ii]), int(outside[jj])
                if adversary.rule(i, j):
                    adj[i, j] = adj[j, i] = True
    else:
        raise ValueError(f"unknown adversary kind {adversary.kind!r}")

    np.fill_diagonal(adj, False)
    return PlantedInstance(
        graph=Graph(n=n, adj=adj),
        clique=frozenset(int(v) for v in members),
        revealed=_reveal(members, seed),
        model="semirandom",
        params={"n": n, "s": s, "adversary": adversary.label()},
        seed=seed,
    )


def _sample_points(n: int, m: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    idx = stream(seed, "points").permutation(m * m)[:n]
    return idx // m, idx % m


def gen_null_grid(n: int, m: int, seed: int) -> tuple[Graph, GridConfig]:
    """Null model where every vertex lies in one row clique and one column
    clique of an m x m grid; all other edges are Ber(q) coins."""
    q = grid_rate(m)
    if n > m * m - m:
        raise ValueError(f"need n <= m^2 - m = {m * m - m}, got n={n}")
    a, b = _sample_points(n, m, seed)
    forced = (a[:, None] == a[None, :]) | (b[:, None] == b[None, :])
    adj = forced | _sym_coin(n, q, stream(seed, "edges"))
    np.fill_diagonal(adj, False)
    cfg = GridConfig(
        mode="grid",
        m=m,
        k=2,
        points=tuple((int(x), int(y)) for x, y in zip(a, b)),
        planted_line=None,
        q=q,
    )
    return Graph(n=n, adj=adj), cfg


def _check_lines_params(n: int, m: int, k: int) -> None:
    if not is_prime(m):
        raise ValueError(f"m must be prime, got m={m}")
    if k < 2 or 2 * k > m:
        raise ValueError(f"need 2 <= k and 2k <= m, got k={k}, m={m}")
    if n > m * (m - 1) // 2:
        raise ValueError(f"need n <= m(m-1)/2 = {m * (m - 1) // 2}, got n={n}")


def _bowtie_matrix(a: np.ndarray, b: np.ndarray, m: int, k: int) -> np.ndarray:
    da = a[:, None] - a[None, :]
    db = b[:, None] - b[None, :]
    rel = np.zeros((len(a), len(a)), dtype=bool)
    for slope in range(k):
        rel |= (da - slope * db) % m == 0
    np.fill_diagonal(rel, False)
    return rel


def gen_null_lines(n: int, m: int, k: int, seed: int) -> tuple[Graph, GridConfig]:
    """Null model over the affine lines of slopes 0..k-1 in the prime grid:
    aligned vertices are connected, everything else is a Ber(q) coin."""
    _check_lines_params(n, m, k)
    q = line_rate(m, k)
    a, b = _sample_points(n, m, seed)
    forced = _bowtie_matrix(a, b, m, k)
    adj = forced | _sym_coin(n, q, stream(seed, "edges"))
    np.fill_diagonal(adj, False)
    cfg = GridConfig(
        mode="lines",
        m=m,
        k=k,
        points=tuple((int(x), int(y)) for x, y in zip(a, b)),
        planted_line=None,
        q=q,
    )
    return Graph(n=n, adj=adj), cfg


@dataclass(frozen=True)
class AssignmentState:
    """Partially built latent assignment during coupled generation.

    Holds the planted structure, the clique's points, and the off-structure
    points assigned so far; the next column index is implied by the prefix
    length.
    """

    mode: str
    m: int
    k: int
    q: float
    planted: tuple[int, int]  # (slope, offset); grid mode plants row `offset`
    clique_points: tuple[Point, ...]
    prior_points: tuple[Point, ...] = ()

    def on_structure(self, p: Point) -> bool:
        r, h = self.planted
        if self.mode == "grid":
            return p[0] == h
        return (p[0] - r * p[1]) % self.m == h % self.m

    def structure_points(self) -> list[Point]:
        r, h = self.planted
        if self.mode == "grid":
            return [(h, b) for b in range(self.m)]
        return [((h + r * b) % self.m, b) for b in range(self.m)]

    def unused_candidates(self) -> list[Point]:
        used = set(self.prior_points)
        return [
            (a, b)
            for a in range(self.m)
            for b in range(self.m)
            if not self.on_structure((a, b)) and (a, b) not in used
        ]

    def perturb_mask(self, p: Point) -> int:
        """Bit mask of clique coordinates whose edge the point forces."""
        mask = 0
        if self.mode == "grid":
            for j, cp in enumerate(self.clique_points):
                if cp[1] == p[1]:
                    mask |= 1 << j
        else:
            for j, cp in enumerate(self.clique_points):
                if bowtie(p, cp, self.m, self.k):
                    mask |= 1 << j
        return mask

    def with_point(self, p: Point) -> "AssignmentState":
        return AssignmentState(
            mode=self.mode,
            m=self.m,
            k=self.k,
            q=self.q,
            planted=self.planted,
            clique_points=self.clique_points,
            prior_points=self.prior_points + (p,),
        )


def column_weights(state: AssignmentState, column: Sequence[int]) -> tuple[list[Point], np.ndarray]:
    """Likelihood of an observed clique column for each unused candidate point.

    Weight of point p with forced set J: prod_{j in J} 1[column_j = 1] *
    prod_{j not in J} q^{column_j} (1-q)^{1-column_j}.
    """
    cands = state.unused_candidates()
    if not cands:
        raise ValueError("no unused off-structure points remain")
    col = [int(c) for c in column]
    if len(col) != len(state.clique_points):
        raise ValueError("column length does not match the clique size")
    q = state.q
    weights = np.zeros(len(cands))
    for idx, p in enumerate(cands):
        jmask = state.perturb_mask(p)
        w = 1.0
        for j, c in enumerate(col):
            if jmask >> j & 1:
                if c == 0:
                    w = 0.0
                    break
            else:
                w *= q if c else 1.0 - q
        weights[idx] = w
    return cands, weights


def conditional_assignment(
    state: AssignmentState, column: Sequence[int], rng: np.random.Generator
) -> Point:
    """Draw the latent point for a fresh vertex given its clique column.

    Samples proportionally to the column likelihood over unused
    off-structure points.  If no point is compatible (possible only on
    events the null law never produces), falls back to a uniform draw so the
    coupled law stays a probability measure.
    """
    cands, weights = column_weights(state, column)
    total = weights.sum()
    if total <= 0.0:
        return cands[int(rng.integers(len(cands)))]
    u = rng.random() * total
    return cands[int(np.searchsorted(np.cumsum(weights), u, side="right").clip(0, len(cands) - 1))]


def hypergeometric_sample(
    draws: int, marked: int, total: int, rng: np.random.Generator
) -> int:
    """Count of marked items in a uniform without-replacement sample."""
    if not 0 <= draws <= total:
        raise ValueError(f"need 0 <= draws <= total, got draws={draws}, total={total}")
    if not 0 <= marked <= total:
        raise ValueError(f"need 0 <= marked <= total, got marked={marked}, total={total}")
    if draws == 0 or marked == 0:
        return 0
    return int(rng.hypergeometric(marked, total - marked, draws))


def gen_coupled(n: int, m: int, k: int, seed: int) -> PlantedInstance:
    """Semi-random instance coupled to the line null model.

    A random line carries the planted clique; cross edges are fair coins;
    each remaining vertex receives a latent point drawn from the null
    conditional given its realized column; leftover edges follow the null
    rule (aligned -> edge, else Ber(q)).  A drawn clique size of zero is
    rejected and redrawn so the instance always exposes a clique.
    """
    _check_lines_params(n, m, k)
    q = line_rate(m, k)
    line_rng = stream(seed, "line")
    rstar = int(line_rng.integers(k))
    hstar = int(line_rng.integers(m))

    size_rng = stream(seed, "size")
    s = hypergeometric_sample(n, m, m * m, size_rng)
    while s == 0:
        s = hypergeometric_sample(n, m, m * m, size_rng)

    members = _choose_clique(n, s, seed)
    inside = np.zeros(n, dtype=bool)
    inside[members] = True

    bvals = stream(seed, "spoints").permutation(m)[:s]
    cpts = tuple(((hstar + rstar * int(b)) % m, int(b)) for b in bvals)

    state = AssignmentState(
        mode="lines", m=m, k=k, q=q, planted=(rstar, hstar), clique_points=cpts
    )
    points: dict[int, Point] = {int(v): cpts[j] for j, v in enumerate(members)}
    columns: dict[int, np.ndarray] = {}
    for i in range(n):
        if inside[i]:
            continue
        col = (stream(seed, "column", i).random(s) < 0.5).astype(np.uint8)
        p = conditional_assignment(state, col, stream(seed, "point", i))
        state = state.with_point(p)
        points[i] = p
        columns[i] = col

    adj = np.zeros((n, n), dtype=bool)
    adj[np.ix_(members, members)] = True
    mlist = [int(v) for v in members]
    for i, col in columns.items():
        adj[mlist, i] = col.astype(bool)
        adj[i, mlist] = col.astype(bool)

    a = np.array([points[i][0] for i in range(n)])
    b = np.array([points[i][1] for i in range(n)])
    forced = _bowtie_matrix(a, b, m, k)
    noise = _sym_coin(n, q, stream(seed, "noise"))
    out_mask = ~inside[:, None] & ~inside[None, :]
    adj[out_mask] = (forced | noise)[out_mask]
    np.fill_diagonal(adj, False)

    cfg = GridConfig(
        mode="lines",
        m=m,
        k=k,
        points=tuple(points[i] for i in range(n)),
        planted_line=(rstar, hstar),
        q=q,
    )
    return PlantedInstance(
        graph=Graph(n=n, adj=adj),
        clique=frozenset(mlist),
        revealed=_reveal(members, seed),
        model="coupled",
        params={"n": n, "m": m, "k": k},
        seed=seed,
        grid=cfg,
    )


# ---------------------------------------------------------------------------
# Instance files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LoadedInstance:
    """Instance file contents; clique may be empty for null models."""

    graph: Graph
    clique: frozenset[int]
    revealed: int | None
    model: str
    params: dict
    seed: int
    grid: GridConfig | None


def instance_record(
    graph: Graph,
    model: str,
    params: dict,
    seed: int,
    clique: Iterable[int] = (),
    revealed: int | None = None,
    grid: GridConfig | None = None,
) -> dict:
    members = sorted(int(v) for v in clique)
    record = {
        "n": graph.n,
        "s": len(members),
        "model": model,
        "params": params,
        "seed": int(seed),
        "v": None if revealed is None else int(revealed),
        "clique": members,
        "edges": [[i, j] for i, j in graph.edges()],
    }
    if grid is not None:
        record["grid"] = {
            "m": grid.m,
            "k": grid.k,
            "r_star": None if grid.planted_line is None else grid.planted_line[0],
            "h_star": None if grid.planted_line is None else grid.planted_line[1],
            "points": [[a, b] for a, b in grid.points],
        }
    else:
        record["grid"] = None
    return record


def instance_to_json(inst: PlantedInstance) -> dict:
    return instance_record(
        inst.graph,
        inst.model,
        inst.params,
        inst.seed,
        clique=inst.clique,
        revealed=inst.revealed,
        grid=inst.grid,
    )


_GRID_MODE_BY_MODEL = {"null-grid": "grid", "null-lines": "lines", "coupled": "lines"}


def instance_from_json(record: dict) -> LoadedInstance:
    n = int(record["n"])
    graph = Graph.from_edges(n, [(int(i), int(j)) for i, j in record["edges"]])
    grid = None
    graw = record.get("grid")
    if graw is not None:
        mode = _GRID_MODE_BY_MODEL.get(record["model"], "lines")
        m, k = int(graw["m"]), int(graw["k"])
        planted = None
        if graw.get("r_star") is not None:
            planted = (int(graw["r_star"]), int(graw["h_star"]))
        q = grid_rate(m) if mode == "grid" else line_rate(m, k)
        grid = GridConfig(
            mode=mode,
            m=m,
            k=k,
            points=tuple((int(a), int(b)) for a, b in graw["points"]),
            planted_line=planted,
            q=q,
        )
    return LoadedInstance(
        graph=graph,
        clique=frozenset(int(v) for v in record["clique"]),
        revealed=None if record.get("v") is None else int(record["v"]),
        model=record["model"],
        params=record.get("params", {}),
        seed=int(record["seed"]),
        grid=grid,
    )


def dump_instance(record: dict) -> str:
    return json.dumps(record, indent=2, sort_keys=True) + "\n"
