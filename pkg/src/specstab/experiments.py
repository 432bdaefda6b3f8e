"""Benchmark generators and harnesses for the stability experiments.

Covers the stochastic block model, its 2r-vertex chain-coupled surrogate,
randomly distributed numbers around centers with Gaussian similarity
weights, and the sweep/frequency harnesses that compare the spectral gap
and the structured distance to ambiguity as stability indicators.

All randomness flows through one seeded 64-bit generator (PCG64); sample
loops split the seed per sample index with numpy SeedSequence spawning,
so tables are bit-reproducible and order-independent.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph_core import SparsityPattern, WeightMatrix
from .parallel import parallel_map
from .sda_outer import OuterConfig, SweepTable, k_opt_sweep

__all__ = [
    "SbmSpec",
    "CentersSpec",
    "sample_sbm",
    "reduced_chain_model",
    "sample_centers",
    "gaussian_similarity",
    "ChainSweepRow",
    "chain_sweep",
    "sbm_sweep",
    "FrequencyTable",
    "frequency_experiment",
]


@dataclass(frozen=True)
class SbmSpec:
    """Stochastic block model: community sizes and edge-probability matrix."""

    community_sizes: tuple[int, ...]
    p: tuple[tuple[float, ...], ...]
    seed: int = 0

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        r = len(self.community_sizes)
        if p.shape != (r, r):
            raise ValueError(f"probability matrix must be {r}x{r}")
        if not np.allclose(p, p.T):
            raise ValueError("probability matrix must be symmetric")
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        if any(s <= 0 for s in self.community_sizes):
            raise ValueError("community sizes must be positive")

    @property
    def p_matrix(self) -> np.ndarray:
        return np.asarray(self.p, dtype=float)


@dataclass(frozen=True)
class CentersSpec:
    """Random numbers drawn around given centers, one uniform group per draw."""

    centers: tuple[float, ...]
    n: int = 120
    alpha: float = 0.25
    weight_tol: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.n < len(self.centers):
            raise ValueError("need at least one sample per center")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not 0 < self.weight_tol < 1:
            raise ValueError("weight_tol must lie in (0, 1)")


def sample_sbm(spec: SbmSpec) -> WeightMatrix:
    """Sample a 0/1-weighted graph: vertices of communities i and j are
    connected independently with probability p_ij.  No self-loops."""
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    sizes = spec.community_sizes
    starts = np.concatenate([[0], np.cumsum(sizes)])
    n = int(starts[-1])
    p = spec.p_matrix
    edges: list[tuple[int, int]] = []
    r = len(sizes)
    for a in range(r):
        for b in range(a, r):
            pab = p[a, b]
            ia, ib = starts[a], starts[b]
            if a == b:
                iu, ju = np.triu_indices(sizes[a], k=1)
                if pab >= 1.0:
                    keep = np.ones(len(iu), dtype=bool)
                elif pab <= 0.0:
                    continue
                else:
                    keep = rng.random(len(iu)) < pab
                edges.extend(zip((iu[keep] + ia).tolist(), (ju[keep] + ia).tolist()))
            else:
                if pab <= 0.0:
                    # keep the stream position independent of probabilities
                    continue
                draw = rng.random((sizes[a], sizes[b])) < pab
                ii, jj = np.nonzero(draw)
                edges.extend(zip((ii + ia).tolist(), (jj + ib).tolist()))
    pattern = SparsityPattern.from_edges(n, edges)
    return WeightMatrix(pattern, np.ones(pattern.m))


def reduced_chain_model(r: int, mu1: float, community_size: float = 100.0) -> WeightMatrix:
    """2r-vertex surrogate of the chain-coupled block model.

    Vertices 2k and 2k+1 form community k and are tied with weight equal to
    the community size; consecutive communities are coupled by mu_k * I_2
    with mu_k = (r-k)/(r-1) * mu1 for k = 1..r-1.
    """
    if r < 2:
        raise ValueError("need at least two communities")
    if mu1 < 0:
        raise ValueError("mu1 must be nonnegative")
    edges = []
    weights = []
    for k in range(r):
        edges.append((2 * k, 2 * k + 1))
        weights.append(community_size)
    for k in range(1, r):
        mu = (r - k) / (r - 1) * mu1
        if mu == 0.0:
            continue
        edges.append((2 * (k - 1), 2 * k))
        weights.append(mu)
        edges.append((2 * (k - 1) + 1, 2 * k + 1))
        weights.append(mu)
    order = np.argsort([e[0] * 2 * r + e[1] for e in edges], kind="stable")
    pattern = SparsityPattern(n=2 * r, edges=tuple(edges[i] for i in order))
    return WeightMatrix(pattern, np.asarray(weights)[order])


def _draw_centers(spec: CentersSpec, rng: np.random.Generator) -> np.ndarray:
    m = np.asarray(spec.centers, dtype=float)
    groups = rng.integers(0, len(m), size=spec.n)
    return m[groups] + rng.standard_normal(spec.n)


def sample_centers(spec: CentersSpec) -> np.ndarray:
    """n numbers, each N(m_j, 1) for a uniformly chosen center m_j."""
    return _draw_centers(spec, np.random.default_rng(np.random.SeedSequence(spec.seed)))


def gaussian_similarity(points, alpha: float, weight_tol: float = 1e-4) -> WeightMatrix:
    """Graph of exp(-alpha (x_i - x_j)^2) weights, discarding values below
    weight_tol (which would otherwise make the graph complete)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    x = np.asarray(points, dtype=float)
    n = len(x)
    iu, ju = np.triu_indices(n, k=1)
    f = np.exp(-alpha * (x[iu] - x[ju]) ** 2)
    keep = f >= weight_tol
    pattern = SparsityPattern(n=n, edges=tuple(zip(iu[keep].tolist(), ju[keep].tolist())))
    return WeightMatrix(pattern, f[keep])


# ---------------------------------------------------------------------------
# Sweep harnesses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainSweepRow:
    """One sweep point: coupling value, per-k distances and scaled gaps."""

    x: float  # mu1 for the reduced model, p1 for the sampled one
    table: SweepTable

    def delta(self, k: int) -> float | None:
        for row in self.table.rows:
            if row.k == k:
                return row.delta
        return None

    def scaled_gap(self, k: int) -> float | None:
        for row in self.table.rows:
            if row.k == k:
                return row.scaled_gap
        return None


def chain_sweep(mu1_values, k_min: int = 4, k_max: int = 8, r: int = 8,
                community_size: float = 100.0,
                config: OuterConfig | None = None) -> list[ChainSweepRow]:
    """k_opt sweep of the reduced chain model over coupling strengths."""
    if config is None:
        config = OuterConfig.fast()

    def solve(mu1: float) -> ChainSweepRow:
        w = reduced_chain_model(r, mu1, community_size)
        return ChainSweepRow(x=float(mu1), table=k_opt_sweep(w, k_min, k_max, config))

    return list(parallel_map(solve, mu1_values))


def sbm_sweep(p1_values, k_min: int = 4, k_max: int = 6, r: int = 6,
              community_size: int = 30, seed: int = 0,
              config: OuterConfig | None = None) -> list[ChainSweepRow]:
    """k_opt sweep over sampled chain SBMs with p_k = (r-k)/(r-1) * p1."""
    if config is None:
        config = OuterConfig.fast(seed)
    p1_values = [float(p) for p in p1_values]
    children = np.random.SeedSequence(seed).spawn(len(p1_values))

    def solve(arg) -> ChainSweepRow:
        p1, child = arg
        probs = np.eye(r)
        for a in range(r):
            for b in range(r):
                d = abs(a - b)
                if d > 0:
                    probs[a, b] = max(0.0, (r - d) / (r - 1) * p1)
        spec = SbmSpec(community_sizes=(community_size,) * r,
                       p=tuple(map(tuple, probs)),
                       seed=int(child.generate_state(1)[0] % (2 ** 63)))
        w = sample_sbm(spec)
        return ChainSweepRow(x=p1, table=k_opt_sweep(w, k_min, k_max, config))

    return list(parallel_map(solve, zip(p1_values, children)))


# ---------------------------------------------------------------------------
# Frequency experiment (randomly distributed numbers around centers)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrequencyTable:
    """How often each k is selected as optimal by each stability indicator."""

    k_values: tuple[int, ...]
    samples: int
    successes: int
    failures: int
    counts_gap: dict = field(default_factory=dict)
    counts_delta: dict = field(default_factory=dict)

    def pct_gap(self, k: int) -> float:
        return 100.0 * self.counts_gap.get(k, 0) / max(self.successes, 1)

    def pct_delta(self, k: int) -> float:
        return 100.0 * self.counts_delta.get(k, 0) / max(self.successes, 1)


def frequency_experiment(spec: CentersSpec, samples: int,
                         k_range: tuple[int, int],
                         config: OuterConfig | None = None) -> FrequencyTable:
    """Frequency of each k being optimal under the gap and SDA indicators.

    Each sample draws points around the centers, builds the similarity
    graph, and computes argmax_k of both indicators over k_range.  Samples
    where any distance solve fails are counted and excluded from the
    denominators.
    """
    if config is None:
        config = OuterConfig.fast(spec.seed)
    k_min, k_max = k_range
    children = np.random.SeedSequence(spec.seed).spawn(samples)

    def run(child) -> tuple[int, int] | None:
        rng = np.random.default_rng(child)
        points = _draw_centers(spec, rng)
        w = gaussian_similarity(points, spec.alpha, spec.weight_tol)
        if k_max >= w.pattern.n:
            return None
        table = k_opt_sweep(w, k_min, k_max, config)
        if table.k_opt_delta is None or any(r.error for r in table.rows):
            return None
        return table.k_opt_gap, table.k_opt_delta

    outcomes = parallel_map(run, children)
    counts_gap: dict[int, int] = {}
    counts_delta: dict[int, int] = {}
    successes = 0
    for out in outcomes:
        if out is None:
            continue
        successes += 1
        kg, kd = out
        counts_gap[kg] = counts_gap.get(kg, 0) + 1
        counts_delta[kd] = counts_delta.get(kd, 0) + 1
    return FrequencyTable(
        k_values=tuple(range(k_min, k_max + 1)),
        samples=samples,
        successes=successes,
        failures=samples - successes,
        counts_gap=counts_gap,
        counts_delta=counts_delta,
    )
