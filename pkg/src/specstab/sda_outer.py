"""Outer iteration: Newton-bisection over the perturbation size.

f(eps) is the minimized spectral gap at perturbation size eps.  It is
positive and strictly decreasing below the structured distance to
ambiguity and vanishes there, so the smallest zero is found by Newton
steps from the left (using f'(eps) = <G, E> at the inner minimizer)
combined with bisection once an upper bound is bracketed.  A penalty ramp
restarts the search with stronger nonnegativity enforcement whenever the
minimizer leaves the admissible cone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .eigen import COALESCENCE_TOL, GapReport, spectral_gap
from .graph_core import (
    PatternMatrix,
    WeightMatrix,
    frobenius_inner,
    laplacian,
    laplacian_norm,
)
from .parallel import parallel_map
from .sda_inner import (
    FEASIBILITY_TOL,
    InnerConfig,
    InnerState,
    free_flow_rescale,
    gradient_G,
    inner_minimize,
    state_gradient,
)

__all__ = [
    "CoalescedAlready",
    "NoUpperBound",
    "OuterConfig",
    "SdaResult",
    "SweepRow",
    "SweepTable",
    "initial_guess",
    "f_and_derivative",
    "newton_bisection",
    "compute_sda",
    "certificate",
    "k_opt_sweep",
]


class CoalescedAlready(RuntimeError):
    """The kth pair of L(W) already coalesces; the distance is zero."""


class NoUpperBound(RuntimeError):
    """No perturbation size with vanishing minimized gap was found."""


@dataclass(frozen=True)
class OuterConfig:
    """Newton-bisection and penalty-ramp controls.

    The single tolerance of the textbook iteration is split: tol_f decides
    whether the minimized gap counts as zero (relative to the eigenvalue
    scale), tol_eps stops the bracket (relative to the perturbation scale).
    """

    m_max: int = 60
    tol_f: float = 1e-8
    tol_eps: float = 1e-6
    eps_lb0: float = 0.0
    eps_ub0: float | None = None  # default: 64 * ||L(W)||_F
    c_schedule: tuple[float, ...] = (0.0, 10.0, 100.0, 1000.0)
    seed: int = 0
    inner: InnerConfig = field(default_factory=InnerConfig)
    fprime_floor: float = 1e-12

    def __post_init__(self):
        if self.eps_ub0 is not None and self.eps_lb0 >= self.eps_ub0:
            raise ValueError("eps_lb0 must be below eps_ub0")
        if len(self.c_schedule) == 0 or self.c_schedule[0] != 0.0:
            raise ValueError("c_schedule must start at 0")

    @classmethod
    def fast(cls, seed: int = 0) -> "OuterConfig":
        """Loosened profile for sweeps and sampling experiments.

        Distances come out with ~1e-4 relative accuracy, which the scaling
        polish then tightens further; plenty for argmax-style comparisons.
        """
        return cls(
            m_max=40,
            tol_eps=1e-4,
            seed=seed,
            inner=InnerConfig(tol=1e-7, max_steps=1500, stationarity_rtol=1e-3),
        )


@dataclass(frozen=True, eq=False)
class SdaResult:
    """Structured distance to ambiguity with its extremal perturbation.

    epsilon_star is an upper bound for the distance (the flow may land in
    a local minimizer).  W_star holds W + epsilon_star * E_star with tiny
    negative residuals (>= -1e-10) clamped to zero; when feasible is False
    the raw perturbed weights left the admissible cone even at the largest
    penalty and W_star is the clamped best candidate.
    """

    k: int
    epsilon_star: float
    E_star: PatternMatrix
    W_star: WeightMatrix
    certificate_residual: float
    terminal_gap: float
    bracket: tuple[float, float]
    trace: tuple
    c_used: float
    feasible: bool
    restarts_used: int
    scaled_gap: float  # gap(W, k)/sqrt(2), the unstructured lower bound


def certificate(w: WeightMatrix, w_star: WeightMatrix) -> float:
    """Normalized residual of the extremizer orthogonality condition.

    A converged extremizer satisfies <L(W*) - L(W), L(W*)> = 0; the
    returned value is |<L(W*) - L(W), L(W*)>| / ||L(W*)||_F^2, and 0 when
    L(W*) vanishes (whole-graph deletion, where the condition is trivial).
    """
    if w.pattern != w_star.pattern:
        raise ValueError("pattern mismatch")
    l0 = laplacian(w)
    l1 = laplacian(w_star)
    denom = frobenius_inner(l1, l1)
    if denom < 1e-300:
        return 0.0
    return abs(frobenius_inner(l1 - l0, l1)) / denom


def initial_guess(w: WeightMatrix, k: int,
                  coalescence_tol: float = COALESCENCE_TOL) -> tuple[float, PatternMatrix]:
    """Educated starting point: eps0 = gap/sqrt(2), E0 = normalized free descent.

    eps0 underestimates the optimal size, which keeps the first outer steps
    in the Newton regime.
    """
    report = spectral_gap(w, k)
    if report.gap <= coalescence_tol * max(1.0, abs(report.lambda_k1)):
        raise CoalescedAlready(f"gap {report.gap:.3e} already below tolerance")
    g0 = gradient_G(w, k, 0.0, PatternMatrix.zeros(w.pattern), coalescence_tol)
    e0 = PatternMatrix(w.pattern, -g0.values / laplacian_norm(g0))
    return report.scaled_gap, e0


def f_and_derivative(w: WeightMatrix, k: int, eps: float, c: float,
                     warm: InnerState | None = None,
                     config: OuterConfig = OuterConfig(),
                     rng: np.random.Generator | None = None,
                     ) -> tuple[float, float | None, InnerState]:
    """Minimized gap f(eps) and its derivative f'(eps) = <G, E> at the minimizer.

    Warm states at smaller eps are carried over through the free-flow
    rescaling phase; warm states at larger eps restart the constrained flow
    directly (the shrunk perturbation stays admissible).  Cold starts use
    the educated guess plus random restarts.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    extra = 0
    if warm is None:
        _, e_start = initial_guess(w, k, config.inner.coalescence_tol)
        extra = config.inner.extra_restarts
    elif warm.eps < eps:
        e_start = free_flow_rescale(warm, eps, w, k, c, config.inner).E
    else:
        e_start = warm.E
    state = inner_minimize(w, k, eps, c, e_start, config.inner,
                           extra_starts=extra, rng=rng)
    f = state.F_value
    fprime = None
    if state.gap > config.inner.coalescence_tol * max(1.0, abs(state.lam_k1)):
        g = state_gradient(w, state)
        fprime = 2.0 * float(g.values @ state.E.values)
    return f, fprime, state


def newton_bisection(w: WeightMatrix, k: int, c: float,
                     config: OuterConfig = OuterConfig(),
                     rng: np.random.Generator | None = None) -> SdaResult:
    """Find the smallest eps with vanishing minimized gap at penalty level c.

    Maintains a bracket [eps_lb, eps_ub]: sizes with f >= tol_f raise the
    lower bound and propose a Newton update, sizes with f < tol_f lower the
    upper bound and propose the midpoint; any proposal outside the open
    bracket is replaced by the midpoint.  Stops when the bracket is
    narrower than tol_eps or after m_max iterations.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    report = spectral_gap(w, k)
    eps0, _ = initial_guess(w, k, config.inner.coalescence_tol)
    lb = config.eps_lb0
    cap = config.eps_ub0 if config.eps_ub0 is not None else 64.0 * float(
        np.linalg.norm(laplacian(w)))
    ub = cap
    best: tuple[float, InnerState] | None = None
    solved: list[InnerState] = []
    trace = []
    restarts_used = 0
    eps_m = min(eps0, ub)

    for m in range(config.m_max):
        warm = None
        below = [s for s in solved if s.eps <= eps_m]
        if below:
            warm = max(below, key=lambda s: s.eps)
        f, fp, state = f_and_derivative(w, k, eps_m, c, warm=warm, config=config, rng=rng)
        restarts_used += state.restarts_used
        solved.append(state)
        # The zero test is relative to the eigenvalue scale: on graphs with
        # large weights the minimized gap cannot be driven meaningfully below
        # the eigensolver's resolution at that scale.
        if f <= config.tol_f * max(1.0, abs(state.lam_k1)):
            if best is None or eps_m < best[0]:
                best = (eps_m, state)
            ub = min(ub, eps_m)
            kind = "bisection"
            eps_next = 0.5 * (lb + ub)
        elif fp is not None and fp > 0:
            # Ascending branch of a degenerate landscape (the minimized gap
            # grows again past the distance): the zero lies below eps_m.
            ub = min(ub, eps_m)
            kind = "bisection-descend"
            eps_next = 0.5 * (lb + ub)
        else:
            lb = max(lb, eps_m)
            if fp is None or abs(fp) < config.fprime_floor:
                kind = "midpoint"
                eps_next = 0.5 * (lb + ub)
            else:
                kind = "newton"
                eps_next = eps_m - f / fp
                if not lb < eps_next < ub:
                    kind = "newton->midpoint"
                    eps_next = 0.5 * (lb + ub)
        trace.append((m, eps_m, f, fp, kind))
        if ub - lb < config.tol_eps * max(1.0, ub if ub < cap else eps_m):
            break
        eps_m = eps_next

    if best is None:
        raise NoUpperBound(
            f"no eps with minimized gap below {config.tol_f:g} found up to {cap:g}")
    eps_star, state = best
    return _assemble(w, k, eps_star, state, report, (lb, ub), trace, c, restarts_used)


def _assemble(w, k, eps_star, state, report: GapReport, bracket, trace, c,
              restarts) -> SdaResult:
    from .eigen import eigen_pair

    raw = w.weights + eps_star * state.E.values
    e_star = state.E
    terminal_gap = float(state.gap)

    # Scaling polish: (1+delta) * W_star keeps the pair coalesced for every
    # delta > -1, so the distance can be minimized exactly over that family.
    # This projects out the one suboptimal mode the orthogonality certificate
    # measures and can only shrink the reported upper bound.
    l_w = laplacian(w)
    l_star = laplacian(PatternMatrix(w.pattern, raw))
    denom = float(np.sum(l_star * l_star))
    scale = float(np.sum(l_star * l_w)) / denom if denom > 1e-300 else 0.0
    if denom > 1e-300 and scale > 0.0:
        polished = scale * raw
        diff = PatternMatrix(w.pattern, polished - w.weights)
        eps_polished = laplacian_norm(diff)
        if 0.0 < eps_polished < eps_star:
            lam_k, lam_k1, _, _ = eigen_pair(laplacian(PatternMatrix(w.pattern, polished)), k)
            gap_polished = lam_k1 - lam_k
            if gap_polished <= max(terminal_gap, 1e-12 * max(1.0, abs(lam_k1))) * max(scale, 1.0) + 1e-12:
                raw = polished
                eps_star = eps_polished
                terminal_gap = float(gap_polished)
                e_star = PatternMatrix(w.pattern, diff.values / eps_polished)

    w_star = WeightMatrix(w.pattern, np.maximum(raw, 0.0))
    return SdaResult(
        k=k,
        epsilon_star=float(eps_star),
        E_star=e_star,
        W_star=w_star,
        certificate_residual=certificate(w, w_star),
        terminal_gap=terminal_gap,
        bracket=(min(float(bracket[0]), float(eps_star)), float(bracket[1])),
        trace=tuple(trace),
        c_used=float(c),
        feasible=bool(float(raw.min(initial=0.0)) >= -FEASIBILITY_TOL),
        restarts_used=int(restarts),
        scaled_gap=float(report.scaled_gap),
    )


def compute_sda(w: WeightMatrix, k: int,
                config: OuterConfig = OuterConfig()) -> SdaResult:
    """Structured distance to ambiguity of the k-clustering of W.

    Runs the Newton-bisection search with increasing penalty parameters and
    accepts the first minimizer that keeps W + eps*E nonnegative; in
    practice the run with zero penalty already terminates.  If the whole
    schedule is exhausted the best candidate is returned with
    feasible=False.
    """
    n = w.pattern.n
    if not 1 <= k < n:
        raise ValueError(f"k={k} out of range for n={n}")
    report = spectral_gap(w, k)
    if report.gap <= config.inner.coalescence_tol * max(1.0, abs(report.lambda_k1)):
        zero = PatternMatrix.zeros(w.pattern)
        return SdaResult(
            k=k, epsilon_star=0.0, E_star=zero,
            W_star=WeightMatrix(w.pattern, w.weights.copy()),
            certificate_residual=0.0, terminal_gap=float(report.gap),
            bracket=(0.0, 0.0), trace=(), c_used=0.0, feasible=True,
            restarts_used=0, scaled_gap=float(report.scaled_gap),
        )
    rng = np.random.default_rng(config.seed)
    best: SdaResult | None = None
    for c in config.c_schedule:
        cand = newton_bisection(w, k, c, config, rng)
        if cand.feasible:
            return cand
        if best is None or cand.epsilon_star < best.epsilon_star:
            best = cand
    return best  # penalty schedule exhausted; flagged by feasible=False


@dataclass(frozen=True)
class SweepRow:
    k: int
    gap: float
    scaled_gap: float
    delta: float | None
    error: str | None = None


@dataclass(frozen=True)
class SweepTable:
    rows: tuple[SweepRow, ...]
    k_opt_gap: int
    k_opt_delta: int | None


def k_opt_sweep(w: WeightMatrix, k_min: int, k_max: int,
                config: OuterConfig = OuterConfig()) -> SweepTable:
    """Spectral gap and SDA for every k in [k_min, k_max], with argmax columns.

    Per-k solver failures are recorded and excluded from the delta argmax;
    ties break toward the smaller k.
    """
    n = w.pattern.n
    if not 1 <= k_min <= k_max < n:
        raise ValueError(f"invalid k range [{k_min}, {k_max}] for n={n}")

    def solve(k: int) -> SweepRow:
        rep = spectral_gap(w, k)
        try:
            res = compute_sda(w, k, config)
            if not res.feasible:
                return SweepRow(k, rep.gap, rep.scaled_gap, None, "infeasible")
            return SweepRow(k, rep.gap, rep.scaled_gap, res.epsilon_star, None)
        except (NoUpperBound, RuntimeError) as exc:
            return SweepRow(k, rep.gap, rep.scaled_gap, None, type(exc).__name__)

    rows = tuple(parallel_map(solve, range(k_min, k_max + 1)))
    k_opt_gap = rows[int(np.argmax([r.gap for r in rows]))].k
    deltas = [(r.delta, r.k) for r in rows if r.delta is not None]
    k_opt_delta = None
    if deltas:
        best = max(deltas, key=lambda t: (t[0], -t[1]))
        k_opt_delta = best[1]
    return SweepTable(rows=rows, k_opt_gap=k_opt_gap, k_opt_delta=k_opt_delta)
