"""Inner iteration: norm-constrained gradient flow over admissible perturbations.

For a fixed perturbation size eps, the flow minimizes the kth spectral gap
of L(W + eps*E) over symmetric pattern-supported directions E with
||L(E)||_F = 1, optionally penalizing negative entries of W + eps*E.  The
discretization is a projected explicit Euler method with adaptive step
size; accepted steps never increase the (penalized) objective.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .eigen import COALESCENCE_TOL, eigen_pair
from .graph_core import (
    PatternMatrix,
    WeightMatrix,
    constraint_normal,
    laplacian,
)

__all__ = [
    "CoalescedPair",
    "DegenerateConstraint",
    "NormNotReached",
    "InnerConfig",
    "InnerState",
    "functional_F",
    "penalty_Q",
    "gradient_G",
    "penalized_gradient",
    "multiplier_kappa",
    "state_gradient",
    "euler_step",
    "inner_minimize",
    "free_flow_rescale",
]

FEASIBILITY_TOL = 1e-10


class CoalescedPair(RuntimeError):
    """Gradient requested at a point where the target eigenvalue pair coalesces."""


class DegenerateConstraint(RuntimeError):
    """||L*(L(E))||_F vanished; the unit-norm constraint is degenerate."""


class NormNotReached(UserWarning):
    """Free flow stalled before ||L(E)||_F reached 1; falling back to rescaling."""


@dataclass(frozen=True)
class InnerConfig:
    """Tolerances and step-size policy for the inner gradient flow.

    tol is the relative-change threshold on the objective over accepted
    steps; the flow also stops when the eigenvalue pair coalesces
    (gap <= coalescence_tol) or when the flow velocity drops below
    stationarity_rtol times the gradient norm.
    """

    tol: float = 1e-9
    h0: float = 0.1
    h_min: float = 1e-8
    max_steps: int = 5000
    coalescence_tol: float = COALESCENCE_TOL
    stationarity_rtol: float = 1e-6
    # Steps in a row with relative change <= tol before giving up on further
    # progress (the pure Algorithm-2 criterion has patience 1).
    stagnation_patience: int = 5
    h_max_factor: float = 1e3
    extra_restarts: int = 1

    def __post_init__(self):
        if min(self.tol, self.h0, self.h_min, self.coalescence_tol) <= 0:
            raise ValueError("tolerances and steps must be positive")
        if self.h_min >= self.h0:
            raise ValueError("h_min must be smaller than h0")


@dataclass(frozen=True, eq=False)
class InnerState:
    """Converged (or best-found) point of the inner flow at fixed eps and c."""

    E: PatternMatrix
    eps: float
    c: float
    F_value: float          # penalized objective F_eps(E) + c Q_eps(E)
    gap: float              # raw lambda_{k+1} - lambda_k
    kappa: float
    lam_k: float
    lam_k1: float
    x_k: np.ndarray
    x_k1: np.ndarray
    min_entry: float        # min of W + eps*E over the pattern
    converged: bool
    reason: str
    steps: int
    restarts_used: int = 0
    trace: tuple = ()       # (step, h, F, kappa, min_entry, laplacian_norm)

    @property
    def feasible(self) -> bool:
        return self.min_entry >= -FEASIBILITY_TOL


# ---------------------------------------------------------------------------
# Functional, penalty, gradients
# ---------------------------------------------------------------------------

def functional_F(w: WeightMatrix, k: int, eps: float, e: PatternMatrix) -> float:
    """lambda_{k+1} - lambda_k of L(W + eps*E)."""
    lam_k, lam_k1, _, _ = eigen_pair(laplacian(w.perturbed(eps, e)), k)
    return lam_k1 - lam_k


def penalty_Q(w: WeightMatrix, eps: float, e: PatternMatrix) -> float:
    """Half the squared negative part of W + eps*E, summed over the edge set.

    Each unordered edge contributes through both symmetric entries, so the
    upper-triangle sum carries a factor 2.
    """
    neg = np.minimum(w.weights + eps * e.values, 0.0)
    return float(neg @ neg)


def _pair_gradient_values(pattern, x_lo: np.ndarray, x_hi: np.ndarray) -> np.ndarray:
    """Edge values of L*(x_hi x_hi^T - x_lo x_lo^T), assembled in O(#edges)."""
    ii, jj = pattern.rows, pattern.cols
    sq = x_hi * x_hi - x_lo * x_lo
    return 0.5 * (sq[ii] + sq[jj]) - (x_hi[ii] * x_hi[jj] - x_lo[ii] * x_lo[jj])


def gradient_G(w: WeightMatrix, k: int, eps: float, e: PatternMatrix,
               coalescence_tol: float = COALESCENCE_TOL) -> PatternMatrix:
    """Rescaled gradient of the spectral-gap functional at (eps, E).

    G = L*(x_{k+1} x_{k+1}^T - x_k x_k^T) with eigenvectors of
    L(W + eps*E); the pairing d/dt F = eps * <G, dE/dt> holds along smooth
    paths.  Undefined when the pair has coalesced.
    """
    lam_k, lam_k1, x_k, x_k1 = eigen_pair(laplacian(w.perturbed(eps, e)), k)
    if lam_k1 - lam_k <= coalescence_tol * max(1.0, abs(lam_k1)):
        raise CoalescedPair(f"gap {lam_k1 - lam_k:.3e} below coalescence tolerance")
    return PatternMatrix(w.pattern, _pair_gradient_values(w.pattern, x_k, x_k1))


def penalized_gradient(w: WeightMatrix, k: int, eps: float, c: float,
                       e: PatternMatrix,
                       coalescence_tol: float = COALESCENCE_TOL) -> PatternMatrix:
    """Gradient of the penalized functional F_eps + c*Q_eps.

    Adds c * min(W + eps*E, 0) to the free gradient, so the descent flow
    pushes violated entries back toward nonnegativity.  (The eps factor of
    the exact penalty gradient is absorbed into the flow's time scale.)
    """
    g = gradient_G(w, k, eps, e, coalescence_tol)
    if c == 0.0:
        return g
    neg = np.minimum(w.weights + eps * e.values, 0.0)
    return PatternMatrix(w.pattern, g.values + c * neg)


def state_gradient(w: WeightMatrix, state: "InnerState") -> PatternMatrix:
    """G_{eps,c} at an inner state, assembled from its stored eigenvectors."""
    gvals = _pair_gradient_values(w.pattern, state.x_k, state.x_k1)
    if state.c != 0.0:
        gvals = gvals + state.c * np.minimum(w.weights + state.eps * state.E.values, 0.0)
    return PatternMatrix(w.pattern, gvals)


def multiplier_kappa(g: PatternMatrix, e: PatternMatrix) -> float:
    """Lagrange multiplier of the unit-norm constraint:
    kappa = <G, L*(L(E))> / ||L*(L(E))||_F^2."""
    n = constraint_normal(e)
    nn = 2.0 * float(n.values @ n.values)
    if np.sqrt(nn) < 1e-14:
        raise DegenerateConstraint("||L*(L(E))||_F vanished")
    return 2.0 * float(g.values @ n.values) / nn


# ---------------------------------------------------------------------------
# Flow evaluation and stepping
# ---------------------------------------------------------------------------

class _Engine:
    """Raw-array evaluation of all flow quantities on one fixed pattern.

    The flow takes thousands of eigensolve-sized steps on small graphs, so
    the hot path avoids the value-object layer entirely.
    """

    __slots__ = ("ii", "jj", "n", "m", "k", "c", "wv", "pattern", "subset", "diag")

    def __init__(self, w: WeightMatrix, k: int, c: float):
        p = w.pattern
        self.pattern = p
        self.ii, self.jj, self.n, self.m = p.rows, p.cols, p.n, p.m
        self.k = k
        self.c = c
        self.wv = w.weights
        self.subset = p.n >= 48
        self.diag = np.arange(p.n)

    def pair(self, pv: np.ndarray):
        a = np.zeros((self.n, self.n))
        a[self.ii, self.jj] = pv
        a[self.jj, self.ii] = pv
        d = a.sum(axis=1)
        np.negative(a, out=a)
        a[self.diag, self.diag] = d
        if self.subset:
            from scipy.linalg import eigh

            vals, vecs = eigh(a, subset_by_index=(0, self.k),
                              overwrite_a=True, check_finite=False)
        else:
            vals, vecs = np.linalg.eigh(a)
        kk = self.k
        return float(vals[kk - 1]), float(vals[kk]), vecs[:, kk - 1], vecs[:, kk]

    def evaluate(self, ev: np.ndarray, eps: float):
        """(F, gap, lam_k, lam_k1, x_k, x_k1, min_entry) at direction ev."""
        pv = self.wv + eps * ev
        lk, lk1, xk, xk1 = self.pair(pv)
        gap = lk1 - lk
        f = gap
        if self.c != 0.0:
            neg = np.minimum(pv, 0.0)
            f = gap + self.c * float(neg @ neg)
        return f, gap, lk, lk1, xk, xk1, float(pv.min()) if self.m else 0.0

    def grad(self, ev: np.ndarray, eps: float, xk: np.ndarray, xk1: np.ndarray) -> np.ndarray:
        g = _pair_gradient_values(self.pattern, xk, xk1)
        if self.c != 0.0:
            g = g + self.c * np.minimum(self.wv + eps * ev, 0.0)
        return g

    def normal(self, ev: np.ndarray) -> np.ndarray:
        d = (np.bincount(self.ii, weights=ev, minlength=self.n)
             + np.bincount(self.jj, weights=ev, minlength=self.n))
        return 0.5 * (d[self.ii] + d[self.jj]) + ev

    def lnorm(self, ev: np.ndarray) -> float:
        d = (np.bincount(self.ii, weights=ev, minlength=self.n)
             + np.bincount(self.jj, weights=ev, minlength=self.n))
        return float(np.sqrt(d @ d + 2.0 * (ev @ ev)))


def _make_state(engine: _Engine, ev, eps, c, point, kappa, converged, reason,
                steps, restarts=0, trace=()) -> InnerState:
    f, gap, lk, lk1, xk, xk1, min_entry = point
    return InnerState(
        E=PatternMatrix(engine.pattern, ev), eps=eps, c=c, F_value=f, gap=gap,
        kappa=kappa, lam_k=lk, lam_k1=lk1, x_k=xk, x_k1=xk1,
        min_entry=min_entry, converged=converged, reason=reason,
        steps=steps, restarts_used=restarts, trace=tuple(trace),
    )


def euler_step(w: WeightMatrix, k: int, state: InnerState, h: float) -> InnerState:
    """One projected Euler update of the constrained flow, no step control.

    E moves along -G + kappa*L*(L(E)), is renormalized to ||L(E)||_F = 1,
    and the eigen data is refreshed.
    """
    eng = _Engine(w, k, state.c)
    ev = state.E.values
    point = eng.evaluate(ev, state.eps)
    g = eng.grad(ev, state.eps, point[4], point[5])
    nvals = eng.normal(ev)
    nn = float(nvals @ nvals)
    if np.sqrt(2.0 * nn) < 1e-14:
        raise DegenerateConstraint("||L*(L(E))||_F vanished")
    kappa = float(g @ nvals) / nn
    ev_new = ev + h * (-g + kappa * nvals)
    ev_new = ev_new / eng.lnorm(ev_new)
    return _make_state(eng, ev_new, state.eps, state.c,
                       eng.evaluate(ev_new, state.eps), kappa,
                       state.converged, state.reason, state.steps + 1)


def _flow(w: WeightMatrix, k: int, eps: float, c: float, e0: PatternMatrix,
          config: InnerConfig) -> InnerState:
    """Run the constrained flow from one starting direction."""
    eng = _Engine(w, k, c)
    nrm = eng.lnorm(e0.values)
    if nrm < 1e-14:
        raise DegenerateConstraint("cannot normalize: ||L(E)||_F = 0")
    ev = e0.values / nrm
    point = eng.evaluate(ev, eps)
    f = point[0]
    h = config.h0
    h_max = config.h0 * config.h_max_factor
    kappa = float("nan")
    trace = []
    stagnant = 0

    for step in range(config.max_steps):
        gap_scale = max(1.0, abs(point[3]))
        if f <= config.coalescence_tol * gap_scale:
            return _make_state(eng, ev, eps, c, point, kappa, True, "coalesced",
                               step, trace=trace)

        g = eng.grad(ev, eps, point[4], point[5])
        nvals = eng.normal(ev)
        nn = float(nvals @ nvals)
        if np.sqrt(2.0 * nn) < 1e-14:
            raise DegenerateConstraint("||L*(L(E))||_F vanished")
        kappa = float(g @ nvals) / nn
        edot = kappa * nvals - g
        if float(np.sqrt(edot @ edot)) <= config.stationarity_rtol * float(np.sqrt(g @ g)):
            return _make_state(eng, ev, eps, c, point, kappa, True, "stationary",
                               step, trace=trace)

        # Step-size control: halve until the objective does not increase.
        # Near coalescence the eigenvectors get noisy, but rejected trials
        # already guard against bad directions there.
        h_eff = h
        accepted = None
        while True:
            ev_trial = ev + h_eff * edot
            ev_trial /= eng.lnorm(ev_trial)
            trial = eng.evaluate(ev_trial, eps)
            if trial[0] <= f:
                accepted = trial
                break
            h_eff *= 0.5
            h = h_eff
            if h_eff < config.h_min:
                break
        if accepted is None:
            return _make_state(eng, ev, eps, c, point, kappa, True, "h_min",
                               step, trace=trace)

        rel = abs(f - accepted[0]) / max(abs(accepted[0]), 1e-300)
        ev = ev_trial
        point = accepted
        f = point[0]
        trace.append((step, h_eff, f, kappa, point[6], eng.lnorm(ev)))
        h = min(h * 2.0, h_max)
        stagnant = stagnant + 1 if rel <= config.tol else 0
        if stagnant >= config.stagnation_patience:
            return _make_state(eng, ev, eps, c, point, kappa, True, "f_converged",
                               step + 1, trace=trace)

    return _make_state(eng, ev, eps, c, point, kappa, False, "max_steps",
                       config.max_steps, trace=trace)


def inner_minimize(w: WeightMatrix, k: int, eps: float, c: float,
                   e0: PatternMatrix, config: InnerConfig = InnerConfig(),
                   extra_starts: int = 0,
                   rng: np.random.Generator | None = None) -> InnerState:
    """Drive the constrained gradient flow to a stationary point.

    Runs from e0 and optionally from extra random pattern directions (the
    flow may have several local minima); the state with the lowest terminal
    objective wins.  A state that hit max_steps is returned with
    converged=False rather than raised.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    best = _flow(w, k, eps, c, e0, config)
    restarts = 0
    if extra_starts > 0:
        if rng is None:
            rng = np.random.default_rng(0)
        for _ in range(extra_starts):
            direction = PatternMatrix(w.pattern, rng.standard_normal(w.pattern.m))
            cand = _flow(w, k, eps, c, direction, config)
            restarts += 1
            if cand.F_value < best.F_value:
                best = cand
    if restarts:
        best = replace(best, restarts_used=restarts)
    return best


def free_flow_rescale(prev: InnerState, eps1: float, w: WeightMatrix, k: int,
                      c: float, config: InnerConfig = InnerConfig()) -> InnerState:
    """Warm start for a larger perturbation size via the free gradient flow.

    Starting from (eps0/eps1) * E_{eps0}, whose Laplacian norm is below 1,
    the unconstrained flow dE/dt = -G decreases the objective while the norm
    of L(E) grows; integration stops when the norm reaches 1 and the state
    is handed to the constrained flow.  If the free flow stalls, the
    direction is renormalized directly (with a warning).
    """
    eps0 = prev.eps
    if eps1 < eps0:
        raise ValueError("free-flow rescaling only moves to larger eps")
    if eps1 == eps0:
        return prev
    eng = _Engine(w, k, c)
    ev = (eps0 / eps1) * prev.E.values
    point = eng.evaluate(ev, eps1)
    f = point[0]
    h = config.h0
    stalled = False
    steps = 0
    for steps in range(config.max_steps):
        if eng.lnorm(ev) >= 1.0:
            break
        if f <= config.coalescence_tol * max(1.0, abs(point[3])):
            break  # goal state reachable below the sphere; hand off as-is
        g = eng.grad(ev, eps1, point[4], point[5])
        accepted = None
        h_eff = h
        while h_eff >= config.h_min:
            ev_trial = ev - h_eff * g
            trial = eng.evaluate(ev_trial, eps1)
            if trial[0] <= f:
                accepted = trial
                h = h_eff
                break
            h_eff *= 0.5
        if accepted is None:
            stalled = True
            break
        ev = ev_trial
        point = accepted
        f = point[0]
        h = min(h * 2.0, config.h0 * config.h_max_factor)
    else:
        stalled = True

    if stalled and eng.lnorm(ev) < 0.99:
        # A stall within rounding of the sphere is the natural handoff point;
        # only a genuinely short trajectory is worth flagging.
        warnings.warn("free flow stalled below unit norm; renormalizing directly",
                      NormNotReached)
    nrm = eng.lnorm(ev)
    if nrm < 1e-14:
        raise DegenerateConstraint("cannot normalize: ||L(E)||_F = 0")
    ev = ev / nrm
    return _make_state(eng, ev, eps1, c, eng.evaluate(ev, eps1), float("nan"),
                       False, "free_flow_handoff", steps)
