"""Growth engine for self-reinforced preferential attachment trees.

The tree starts as an isolated vertex v0; v1 attaches to v0 at time 1.  At
time n+1 a new vertex attaches to vertex i with probability proportional to
the integrated weight

    theta(v_i, n) = sum_{m=i}^{n} (deg(v_i, m) + delta),      delta > -1,

i.e. the cumulative sum over all past times of the vertex's affine degree.
The weight admits an exact event decomposition: every edge born at time t
contributes (n+1-t) to each endpoint, and the delta term of vertex i is an
arithmetic function of its birth time.  That decomposition is what makes an
O(1)-per-step sampler possible (`sample_target_fast`) next to the O(n)
reference sampler (`sample_target_naive`).

Two normalization conventions are supported:

* ``exact``: the literal weights; vertex i accrues delta from its birth step
  onward, so its delta part at time n is delta*(n+1-i).  The total weight is
  n(n+1) + delta*(n+1)*(n+2)/2.
* ``paper_total``: every vertex starts accruing delta one step after birth
  (delta part delta*(n-i)), which makes the total weight exactly
  n(n+1)(1+delta/2).  The two totals differ by delta*(n+1) for every n.

Exact (rational) arithmetic is supported by passing a `fractions.Fraction`
delta; this is intended for oracle tests at small n, not production runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import isqrt
from typing import Iterator, Optional, Sequence

from .rng import CounterRng

CONVENTIONS = ("exact", "paper_total")
SAMPLERS = ("fast", "naive")


@dataclass(frozen=True)
class GrowthParams:
    """Validated parameters of a growth run."""

    delta: float
    n_final: int
    seed: int = 0
    sampler: str = "fast"
    convention: str = "exact"

    def __post_init__(self):
        if not self.delta > -1:
            raise ValueError(f"delta must be > -1, got {self.delta}")
        if self.n_final < 1:
            raise ValueError(f"n_final must be >= 1, got {self.n_final}")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"convention must be one of {CONVENTIONS}")
        # under the literal weights v0 starts at theta(v0,1) = 1 + 2*delta and
        # all increments are >= 1 + delta, so delta >= -1/2 keeps every weight
        # nonnegative; paper_total is positive for all delta > -1
        if self.convention == "exact" and self.delta < -0.5:
            raise ValueError("exact convention requires delta >= -1/2 (v0 weight would go negative)")
        if not 0 <= int(self.seed) <= (1 << 64) - 1:
            raise ValueError("seed must fit in 64 unsigned bits")


@dataclass
class WeightView:
    """Integrated weight of one vertex, split into its two components."""

    vertex: int
    theta: float
    degree_part: float
    delta_part: float


@dataclass
class TreeRecord:
    """A grown tree: parent pointers plus incremental weight bookkeeping.

    Vertex m (m >= 1) is born at time m and carries edge m = (m, parent[m]).
    `degree[i]` and `edge_time_sum[i]` (sum of birth times of edges incident
    to i) are maintained so every vertex weight is O(1) to evaluate:
    degree part = (n+1)*degree[i] - edge_time_sum[i].
    """

    parent: list[int]
    degree: list[int]
    edge_time_sum: list[int]
    delta: float | Fraction = 0.0
    params: Optional[GrowthParams] = None

    @classmethod
    def initial(cls, delta: float | Fraction = 0.0) -> "TreeRecord":
        """The forced first step: the single edge {v0, v1}."""
        return cls(parent=[-1, 0], degree=[1, 1], edge_time_sum=[1, 1], delta=delta)

    @classmethod
    def from_parents(cls, parents: Sequence[int], delta: float | Fraction = 0.0) -> "TreeRecord":
        """Rebuild a record from the parent choices of vertices 1..n."""
        if len(parents) < 1 or parents[0] != 0:
            raise ValueError("history must start with parent[1] = 0")
        tree = cls.initial(delta)
        for m, p in enumerate(parents[1:], start=2):
            if not 0 <= p < m:
                raise ValueError(f"parent of vertex {m} must be < {m}")
            tree.add_vertex(p)
        return tree

    @property
    def n(self) -> int:
        return len(self.parent) - 1

    def edge(self, m: int) -> tuple[int, int]:
        """Endpoints (m, parent[m]) of the edge created at time m."""
        if not 1 <= m <= self.n:
            raise IndexError(f"edge time {m} out of range 1..{self.n}")
        return (m, self.parent[m])

    @property
    def edge_log(self) -> list[tuple[int, int]]:
        return [(m, self.parent[m]) for m in range(1, self.n + 1)]

    def add_vertex(self, target: int) -> int:
        """Attach a new vertex to `target`; returns the new vertex index."""
        m = self.n + 1
        if not 0 <= target < m:
            raise ValueError(f"attach target {target} out of range")
        self.parent.append(target)
        self.degree.append(1)
        self.degree[target] += 1
        self.edge_time_sum.append(m)
        self.edge_time_sum[target] += m
        return m

    def check_invariants(self) -> None:
        n = self.n
        if n < 1:
            raise AssertionError("tree must contain at least one edge")
        if self.parent[1] != 0:
            raise AssertionError("parent[1] must be 0")
        for m in range(1, n + 1):
            if not 0 <= self.parent[m] < m:
                raise AssertionError(f"parent[{m}] = {self.parent[m]} violates parent[m] < m")
        if sum(self.degree) != 2 * n:
            raise AssertionError("degree sum must equal 2n")
        if min(self.degree) < 1:
            raise AssertionError("all degrees must be >= 1")


def _delta_part(delta, birth: int, n: int, convention: str):
    """Delta accrual of a vertex born at `birth`, evaluated at time n."""
    if convention == "exact":
        return delta * (n + 1 - birth)
    if convention == "paper_total":
        return delta * (n - birth)
    raise ValueError(f"unknown convention {convention!r}")


def _replay_weight(tree: TreeRecord, i: int, convention: str):
    """Literal double sum over times m = i..n of (deg(v_i, m) + delta)."""
    n = tree.n
    delta = tree.delta
    times = sorted(
        ([i] if i >= 1 else []) + [m for m in range(1, n + 1) if tree.parent[m] == i]
    )
    total = 0 * delta
    deg = 0
    t_idx = 0
    for m in range(i, n + 1):
        while t_idx < len(times) and times[t_idx] <= m:
            deg += 1
            t_idx += 1
        total += deg
        if convention == "exact" or m > i:
            total += delta
    return total


def vertex_weight(tree: TreeRecord, i: int, convention: str = "exact") -> WeightView:
    """Integrated weight theta(v_i, n), computed two independent ways.

    (a) by replaying the degree history and summing deg + delta over time,
    (b) by the event identity sum_{e at i} (n+1 - t_e) + delta part.
    The two are asserted equal (exactly in rational mode, else to 1e-12
    relative) before the event-identity view is returned.
    """
    n = tree.n
    if n < 1:
        raise ValueError("weights are defined only for n >= 1")
    if not 0 <= i <= n:
        raise IndexError(f"vertex {i} out of range 0..{n}")
    degree_part = (n + 1) * tree.degree[i] - tree.edge_time_sum[i]
    delta_part = _delta_part(tree.delta, i, n, convention)
    theta = degree_part + delta_part
    replay = _replay_weight(tree, i, convention)
    if isinstance(tree.delta, Fraction) or float(tree.delta) * 2 == int(float(tree.delta) * 2):
        assert replay == theta, f"weight identity broken at vertex {i}: {replay} != {theta}"
    else:
        assert abs(replay - theta) <= 1e-12 * max(1.0, abs(theta)), (
            f"weight identity broken at vertex {i}: {replay} != {theta}"
        )
    return WeightView(vertex=i, theta=theta, degree_part=degree_part, delta_part=delta_part)


def total_weight_closed(n: int, delta, convention: str = "exact"):
    """Closed form of the total weight at time n under either convention."""
    if convention == "exact":
        return n * (n + 1) + delta * (n + 1) * (n + 2) / (Fraction(2) if isinstance(delta, Fraction) else 2)
    if convention == "paper_total":
        return n * (n + 1) + delta * n * (n + 1) / (Fraction(2) if isinstance(delta, Fraction) else 2)
    raise ValueError(f"unknown convention {convention!r}")


def total_weight(tree: TreeRecord, convention: str = "exact"):
    """Total weight at time n; equals the sum of all vertex weights.

    Under ``paper_total`` this is n(n+1)(1+delta/2); under ``exact`` it is
    n(n+1) + delta(n+1)(n+2)/2.  The gap is delta*(n+1) for every n >= 1.
    """
    n = tree.n
    if n < 1:
        raise ValueError("total weight is defined only for n >= 1")
    delta = tree.delta
    closed = total_weight_closed(n, delta, convention)
    # recompute from per-vertex bookkeeping as a cross-check
    summed = sum(
        (n + 1) * tree.degree[i] - tree.edge_time_sum[i] + _delta_part(delta, i, n, convention)
        for i in range(n + 1)
    )
    if isinstance(delta, Fraction):
        assert summed == closed
    else:
        assert abs(summed - closed) <= 1e-9 * max(1.0, abs(closed))
    return closed


def attach_probabilities(tree: TreeRecord, convention: str = "exact") -> list:
    """Attachment distribution over vertices 0..n: theta_i / sum theta_j."""
    n = tree.n
    if n < 1:
        raise ValueError("attachment probabilities require n >= 1")
    delta = tree.delta
    thetas = [
        (n + 1) * tree.degree[i] - tree.edge_time_sum[i] + _delta_part(delta, i, n, convention)
        for i in range(n + 1)
    ]
    if min(thetas) < 0:
        raise ValueError(
            "negative attachment weight; the exact convention requires delta >= -1/2"
        )
    total = sum(thetas)
    probs = [t / total for t in thetas]
    s = sum(probs)
    if isinstance(delta, Fraction):
        assert s == 1
    else:
        assert abs(s - 1.0) <= 1e-12
    return probs


def sample_target_naive(tree: TreeRecord, rng: CounterRng, convention: str = "exact") -> int:
    """Reference O(n) sampler: one pass over the maintained vertex weights."""
    n = tree.n
    if n < 1:
        raise ValueError("sampling requires n >= 1")
    delta = float(tree.delta)
    degree = tree.degree
    tsum = tree.edge_time_sum
    np1 = n + 1
    if convention == "exact":
        total = n * np1 + delta * np1 * (n + 2) / 2
        shift = np1
    else:
        total = n * np1 * (1 + delta / 2)
        shift = n
    u = rng.random() * total
    acc = 0.0
    for i in range(np1):
        acc += np1 * degree[i] - tsum[i] + delta * (shift - i)
        if u < acc:
            return i
    return n  # guard against float roundoff at the right edge


def _triangular_index(r: int) -> int:
    """Smallest K >= 1 with K(K+1)/2 > r, by exact integer CDF inversion."""
    k = (isqrt(8 * r + 1) - 1) // 2 + 1
    while k * (k + 1) // 2 <= r:  # integer-verified; corrects at most +-1
        k += 1
    while k >= 2 and (k - 1) * k // 2 > r:
        k -= 1
    return k


def _is_half_integer(delta) -> bool:
    d2 = 2 * delta
    return d2 == int(d2)


def _fast_target_int(parent, n, d2, convention, rng: CounterRng, deg0, tsum0) -> int:
    """One fast-sampler draw with integer token weights (2*delta integral).

    Token decomposition (all weights scaled by 2 so half-integer delta stays
    integral): for each past time m, the edge (m, parent[m]) carries endpoint
    tokens of weight 2*(n+1-m) each; the delta mass delta*(n+1-m) goes to v_m
    under ``exact`` and to v_{m-1} under ``paper_total``; under ``exact`` v0
    additionally carries delta*(n+1).  Negative delta folds the child's delta
    mass into its endpoint token and handles v0 by rejection against the
    nonnegative proposal (deg0/tsum0 are v0's degree and edge-time sum,
    passed in so the draw stays O(1)).
    """
    t_tri = n * (n + 1) // 2
    if d2 >= 0:
        c2 = 4 + d2
        extra2 = d2 * (n + 1) if convention == "exact" else 0
        r = rng.randbelow(c2 * t_tri + extra2)
        if r < extra2:
            return 0
        big_r, s = divmod(r - extra2, c2)
        m = n + 1 - _triangular_index(big_r)
        if s < 2:
            return m
        if s < 4:
            return parent[m]
        return m if convention == "exact" else m - 1
    # delta in (-1, 0): child token absorbs its own delta mass
    c2 = 4 + d2  # = 2*(2 + delta) scaled, still positive
    child2 = 2 + d2  # = 2*(1 + delta)
    uniform2 = (-d2) * (n + 1) if convention == "paper_total" else 0
    while True:
        r = rng.randbelow(c2 * t_tri + uniform2)
        if r < uniform2:
            target = r // (-d2)
        else:
            big_r, s = divmod(r - uniform2, c2)
            m = n + 1 - _triangular_index(big_r)
            target = m if s < child2 else parent[m]
        if target != 0:
            return target
        # v0 proposal dominates its true weight; accept with theta0/proposal0
        q0_2 = 2 * ((n + 1) * deg0 - tsum0)
        if convention == "paper_total":
            q0_2 -= d2
        if rng.randbelow(q0_2) < q0_2 + d2 * (n + 1):
            return 0


def _fast_target_float(parent, n, delta, convention, rng: CounterRng, deg0, tsum0) -> int:
    """Float fallback of the fast sampler for non-half-integer delta.

    Distribution matches `attach_probabilities` to ~1e-12 relative (float
    threshold comparisons replace the exact integer draws).
    """
    t_tri = n * (n + 1) // 2
    two_plus = 2.0 + delta
    if delta >= 0:
        extra = delta * (n + 1) if convention == "exact" else 0.0
        total = two_plus * t_tri + extra
        u = rng.random() * total
        if u < extra:
            return 0
        m = n + 1 - _triangular_index(rng.randbelow(t_tri))
        v = rng.random() * two_plus
        if v < 1.0:
            return m
        if v < 2.0:
            return parent[m]
        return m if convention == "exact" else m - 1
    uniform_mass = -delta * (n + 1) if convention == "paper_total" else 0.0
    while True:
        u = rng.random() * (two_plus * t_tri + uniform_mass)
        if u < uniform_mass:
            target = min(int(u / -delta), n)
        else:
            m = n + 1 - _triangular_index(rng.randbelow(t_tri))
            v = rng.random() * two_plus
            target = m if v < 1.0 + delta else parent[m]
        if target != 0:
            return target
        q0 = (n + 1) * deg0 - tsum0
        if convention == "paper_total":
            q0 -= delta
        if rng.random() * q0 < q0 + delta * (n + 1):
            return 0


def sample_target_fast(tree: TreeRecord, rng: CounterRng, convention: str = "exact") -> int:
    """O(1)-per-call sampler, identical in distribution to the naive one."""
    n = tree.n
    if n < 1:
        raise ValueError("sampling requires n >= 1")
    delta = tree.delta
    deg0, tsum0 = tree.degree[0], tree.edge_time_sum[0]
    if _is_half_integer(delta):
        return _fast_target_int(tree.parent, n, int(2 * delta), convention, rng, deg0, tsum0)
    return _fast_target_float(tree.parent, n, float(delta), convention, rng, deg0, tsum0)


def token_probability_vector(tree: TreeRecord, convention: str = "exact") -> list:
    """Attachment distribution induced analytically by the fast sampler.

    Accumulates the token weights the fast sampler draws from (including the
    rejection correction used for negative delta) and normalizes.  With a
    Fraction delta everything is exact; equality with `attach_probabilities`
    is the sampler-correctness oracle.
    """
    n = tree.n
    delta = tree.delta
    parent = tree.parent
    zero = 0 * delta
    w = [zero] * (n + 1)
    if delta >= 0:
        if convention == "exact":
            w[0] = delta * (n + 1)
        for m in range(1, n + 1):
            k = n + 1 - m
            w[m] += k
            w[parent[m]] += k
            if convention == "exact":
                w[m] += delta * k
            else:
                w[m - 1] += delta * k
    else:
        # proposal weights; v0 then gets thinned down to its true weight
        for m in range(1, n + 1):
            k = n + 1 - m
            w[m] += (1 + delta) * k
            w[parent[m]] += k
        if convention == "paper_total":
            for i in range(n + 1):
                w[i] += -delta
        theta0 = w[0] + delta * (n + 1)
        assert 0 <= theta0 <= w[0], "v0 rejection dominance violated"
        w[0] = theta0
    total = sum(w)
    return [x / total for x in w]


@dataclass
class GrowthSnapshot:
    """Degree statistics captured at one checkpoint of a growth run."""

    n: int
    degree_counts: dict[int, int]
    tracked_degrees: dict[int, int] = field(default_factory=dict)


def grow(
    params: GrowthParams,
    checkpoints: Sequence[int] = (),
    rng: Optional[CounterRng] = None,
    track_vertices: Sequence[int] = (),
) -> tuple[TreeRecord, list[GrowthSnapshot]]:
    """Run the attachment dynamics to n_final.

    With the fast sampler the total cost is O(n_final) plus checkpoint cost.
    The returned snapshots hold degree counts and the degrees of
    `track_vertices` at each requested checkpoint time.
    """
    cps = sorted(checkpoints)
    if cps and (cps[0] < 1 or cps[-1] > params.n_final):
        raise ValueError("checkpoints must lie in [1, n_final]")
    if rng is None:
        rng = CounterRng(params.seed)
    tree = TreeRecord.initial(params.delta)
    tree.params = params
    snapshots: list[GrowthSnapshot] = []

    def snap(n_now: int) -> None:
        counts: dict[int, int] = {}
        for d in tree.degree:
            counts[d] = counts.get(d, 0) + 1
        tracked = {v: tree.degree[v] for v in track_vertices if v <= n_now}
        snapshots.append(GrowthSnapshot(n=n_now, degree_counts=counts, tracked_degrees=tracked))

    cp_iter = iter(cps)
    next_cp = next(cp_iter, None)
    while next_cp == 1:
        snap(1)
        next_cp = next(cp_iter, None)

    parent = tree.parent
    degree = tree.degree
    tsum = tree.edge_time_sum
    convention = params.convention
    fast = params.sampler == "fast"
    half = _is_half_integer(params.delta)
    d2 = int(2 * params.delta) if half else 0
    deltaf = float(params.delta)

    for m in range(2, params.n_final + 1):
        n_cur = m - 1
        if fast:
            if half:
                target = _fast_target_int(parent, n_cur, d2, convention, rng, degree[0], tsum[0])
            else:
                target = _fast_target_float(parent, n_cur, deltaf, convention, rng, degree[0], tsum[0])
        else:
            target = sample_target_naive(tree, rng, convention)
        parent.append(target)
        degree.append(1)
        degree[target] += 1
        tsum.append(m)
        tsum[target] += m
        if m == next_cp:
            snap(m)
            while next_cp == m:
                next_cp = next(cp_iter, None)
    return tree, snapshots


def enumerate_histories(n: int) -> Iterator[tuple[int, ...]]:
    """All attachment histories (parent tuples for vertices 1..n)."""
    if n < 1:
        raise ValueError("n must be >= 1")

    def rec(prefix: tuple[int, ...]) -> Iterator[tuple[int, ...]]:
        if len(prefix) == n:
            yield prefix
            return
        # vertices 0..len(prefix) are present; the next one picks any of them
        for p in range(len(prefix) + 1):
            yield from rec(prefix + (p,))

    yield from rec((0,))


def history_probability(parents: Sequence[int], delta, convention: str = "exact"):
    """Exact probability of one attachment history under the growth law."""
    tree = TreeRecord.initial(delta)
    prob = 1 if isinstance(delta, Fraction) else 1.0
    for p in parents[1:]:
        probs = attach_probabilities(tree, convention)
        prob *= probs[p]
        tree.add_vertex(p)
    return prob
