"""Time-split search along the optimal-power trajectory.

For every theta the LP solver gives the cheapest (p_p, p_r) and the secondary
floor gives p_s, so the WSP collapses to a univariate function
``W(theta) = u(theta) + v(theta)``.  Its derivative is increasing, and the
minimizer is the sign change of ``W'`` inside the feasible theta interval.
That root is found with Newton steps guarded by a bisection bracket.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import lp2
from .errors import Infeasible, InvalidInput, Unconverged
from .lp2 import CaseId
from .model import (
    LN2,
    REL_TOL,
    Allocation,
    LinkPair,
    Metrics,
    check_feasible,
    metrics,
    pow2,
    power_floors,
    secondary_threshold,
    wsp,
)

THETA0_STRATEGIES = ("midpoint", "convergence_scan", "convergence_scan_alt", "warm_start")


@dataclass(frozen=True)
class NewtonConfig:
    epsilon: float = 1e-6
    max_iter: int = 50
    theta0_strategy: str = "midpoint"
    case5_edge_formula: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidInput("epsilon must be > 0")
        if self.max_iter < 1:
            raise InvalidInput("max_iter must be >= 1")
        if self.theta0_strategy not in THETA0_STRATEGIES:
            raise InvalidInput(f"unknown theta0 strategy {self.theta0_strategy!r}")


@dataclass
class NewtonTrace:
    iterates: list = field(default_factory=list)
    deltas: list = field(default_factory=list)
    kinds: list = field(default_factory=list)
    converged: bool = False
    theta0_strategy: str = "midpoint"
    note: str = ""

    @property
    def iterations(self) -> int:
        return len(self.deltas)


@dataclass(frozen=True)
class SolveResult:
    continuous: Allocation | None
    snapped: Allocation | None
    trace: NewtonTrace | None
    case: CaseId | None
    continuous_metrics: Metrics | None
    snapped_metrics: Metrics | None
    status: str = "ok"

    @property
    def wsp(self) -> float:
        """Snapped WSP, or +inf when no grid point is feasible."""
        return self.snapped_metrics.wsp if self.snapped_metrics else math.inf


@dataclass(frozen=True)
class Curve:
    """W and its first two theta-derivatives at one point of the trajectory."""

    theta: float
    w: float
    dw: float
    d2w: float
    valid: bool
    lp: lp2.LpSolution
    p_s: float


def v_derivatives(pair: LinkPair, theta: float) -> tuple[float, float, float]:
    """Secondary term ``v = w_st (1-2 theta) p_s_low(theta)`` and its derivatives."""
    if not 0.0 < theta < 0.5:
        raise InvalidInput(f"theta must lie in (0, 0.5), got {theta!r}")
    w_st = pair.weights.w_st
    lam = pair.gains.lambda_ss
    p_min = pair.grid.p_min
    s = 1.0 - 2.0 * theta
    need = secondary_threshold(pair.qos.q_s, theta)
    if need / lam > p_min:
        a = pair.qos.q_s * LN2
        e = pow2(pair.qos.q_s / s)
        v = w_st * s * need / lam
        dv = 2.0 * w_st / lam * (1.0 - (1.0 - a / s) * e)
        d2v = 4.0 * w_st / lam * a * a / s**3 * e
        return v, dv, d2v
    return w_st * s * p_min, -2.0 * w_st * p_min, 0.0


def _v_floor(pair: LinkPair, theta: float) -> bool | None:
    if not 0.0 < theta < 0.5:
        return None
    return secondary_threshold(pair.qos.q_s, theta) / pair.gains.lambda_ss <= pair.grid.p_min


def curve(pair: LinkPair, theta: float, case5_edge_formula: bool = False) -> Curve:
    lp = lp2.solve_lp(pair, theta, case5_edge_formula)
    v, dv, d2v = v_derivatives(pair, theta)
    h = lp2.KINK_WINDOW
    floor = _v_floor(pair, theta)
    valid = (
        lp.derivative_valid
        and _v_floor(pair, theta - h) == floor
        and _v_floor(pair, theta + h) == floor
    )
    p_s = power_floors(pair, theta)[1]
    return Curve(theta, lp.u + v, lp.u_prime + dv, lp.u_double_prime + d2v, valid, lp, p_s)


def feasible_theta_interval(pair: LinkPair) -> tuple[float, float] | None:
    """Closed theta range where all power floors fit under ``p_max``; None if empty."""
    g, q, p_max = pair.gains, pair.qos, pair.grid.p_max
    lo = max(
        q.q_p / math.log2(1.0 + (g.lambda_pp + g.lambda_sp) * p_max),
        q.q_p / math.log2(1.0 + g.lambda_ps * p_max),
    )
    hi = 0.5 * (1.0 - q.q_s / math.log2(1.0 + g.lambda_ss * p_max))
    if hi <= 0.0 or lo >= 0.5 or lo >= hi:
        return None
    return lo, hi


def _inner_interval(pair: LinkPair) -> tuple[float, float]:
    """Feasible interval pulled inward until both ends pass the LP feasibility test."""
    interval = feasible_theta_interval(pair)
    if interval is None:
        raise Infeasible("empty feasible theta interval")
    lo, hi = interval
    out = []
    for end, direction in ((lo, 1.0), (hi, -1.0)):
        nudge = 1e-13
        theta = end
        while lp2.solve_lp(pair, theta).case is CaseId.INFEASIBLE:
            theta = end + direction * nudge * max(end, 1e-3)
            nudge *= 10.0
            if nudge > 1e-3 or not lo <= theta <= hi:
                raise Infeasible("feasible theta interval is numerically empty")
        out.append(theta)
    if out[0] > out[1]:
        raise Infeasible("feasible theta interval is numerically empty")
    return out[0], out[1]


def _third_derivative(pair: LinkPair, theta: float, case5_edge_formula: bool) -> float:
    h = 1e-6 * max(theta, 1e-3)
    return (curve(pair, theta + h, case5_edge_formula).d2w - curve(pair, theta - h, case5_edge_formula).d2w) / (2 * h)


def select_theta0(
    pair: LinkPair,
    strategy: str,
    previous_theta: float | None = None,
    interval: tuple[float, float] | None = None,
    case5_edge_formula: bool = False,
) -> tuple[float, str]:
    """Initial Newton iterate and a note describing any fallback that was taken.

    ``convergence_scan`` returns the first grid theta with a nonzero third
    derivative and ``W''^2 > |W W'|/2``; ``convergence_scan_alt`` uses the
    classical Newton condition ``|W' W'''| < W''^2`` instead.  ``warm_start``
    reuses ``previous_theta`` clamped one grid step inside the interval.
    """
    if interval is None:
        interval = _inner_interval(pair)
    lo, hi = interval
    mid = 0.5 * (lo + hi)
    if strategy == "midpoint":
        return mid, ""
    if strategy == "warm_start":
        if previous_theta is None:
            return mid, "warm_start without previous theta; used midpoint"
        step = pair.grid.delta_theta
        theta = previous_theta
        if theta < lo:
            theta = lo + step
        elif theta > hi:
            theta = hi - step
        if not lo <= theta <= hi:
            return mid, "warm_start clamp left the interval; used midpoint"
        return theta, ""
    if strategy in ("convergence_scan", "convergence_scan_alt"):
        for theta in pair.grid.thetas:
            if not lo < theta < hi:
                continue
            c = curve(pair, theta, case5_edge_formula)
            if not c.valid:
                continue
            d3 = _third_derivative(pair, theta, case5_edge_formula)
            if d3 == 0.0:
                continue
            if strategy == "convergence_scan":
                ok = c.d2w**2 > abs(c.w * c.dw) / 2.0
            else:
                ok = abs(c.dw * d3) < c.d2w**2
            if ok:
                return float(theta), ""
        return mid, f"{strategy} found no grid theta; used midpoint"
    raise InvalidInput(f"unknown theta0 strategy {strategy!r}")


def newton_solve(
    pair: LinkPair,
    config: NewtonConfig = NewtonConfig(),
    previous_theta: float | None = None,
) -> tuple[float, NewtonTrace]:
    """Minimize W over the feasible theta interval by safeguarded Newton on W'.

    A bracket ``[a, b]`` with ``W'(a) < 0 < W'(b)`` is kept throughout; a
    Newton step that leaves it, meets ``W'' <= 0`` or sits on a case kink is
    replaced by bisection.  If ``W'`` has one sign on the whole interval the
    matching endpoint is returned without iterating.
    """
    a, b = _inner_interval(pair)
    trace = NewtonTrace(theta0_strategy=config.theta0_strategy)
    ca = curve(pair, a, config.case5_edge_formula)
    if ca.dw >= 0.0:
        trace.iterates.append(a)
        trace.converged = True
        trace.note = "W' >= 0 on the interval; lower endpoint"
        return a, trace
    cb = curve(pair, b, config.case5_edge_formula)
    if cb.dw <= 0.0:
        trace.iterates.append(b)
        trace.converged = True
        trace.note = "W' <= 0 on the interval; upper endpoint"
        return b, trace

    theta, note = select_theta0(
        pair, config.theta0_strategy, previous_theta, (a, b), config.case5_edge_formula
    )
    trace.note = note
    theta = min(max(theta, a), b)
    trace.iterates.append(theta)
    for _ in range(config.max_iter):
        c = curve(pair, theta, config.case5_edge_formula)
        if c.dw < 0.0:
            a = theta
        elif c.dw > 0.0:
            b = theta
        else:
            trace.deltas.append(0.0)
            trace.kinds.append("newton")
            trace.iterates.append(theta)
            trace.converged = True
            return theta, trace
        kind = "newton"
        nxt = theta - c.dw / c.d2w if c.d2w > 0.0 else math.nan
        if not (c.valid and a < nxt < b):
            nxt = 0.5 * (a + b)
            kind = "bisection"
        delta = abs(nxt - theta)
        theta = nxt
        trace.iterates.append(theta)
        trace.deltas.append(delta)
        trace.kinds.append(kind)
        if delta <= config.epsilon:
            trace.converged = True
            return theta, trace
    raise Unconverged(f"no convergence in {config.max_iter} iterations", (a, b), trace)


def _grid_candidate(pair: LinkPair, theta: float) -> Allocation | None:
    """Cheapest grid allocation at one grid theta.

    p_s is the secondary floor rounded up to a level.  For (p_p, p_r) every
    p_r level is paired with the smallest p_p level that clears both the
    p_p floor and the combined-SNR line, so the result is grid-optimal at
    this theta rather than just the rounded-up continuous corner.
    """
    geo = lp2.case_geometry(pair, theta)
    if lp2.classify(geo) is CaseId.INFEASIBLE:
        return None
    grid, g, w = pair.grid, pair.gains, pair.weights
    p_s = grid.round_up_power(geo.p_s_low)
    if p_s is None:
        return None
    levels = grid.powers
    need = np.maximum(geo.p_p_low, (geo.threshold - g.lambda_sp * levels) / g.lambda_pp)
    idx = np.searchsorted(levels, need * (1.0 - REL_TOL), side="left")
    usable = idx < len(levels)
    if not usable.any():
        return None
    p_p = np.where(usable, levels[np.minimum(idx, len(levels) - 1)], np.inf)
    cost = w.w_pt * theta * p_p + w.w_sr * theta * levels
    for j in np.lexsort((p_p, cost)):
        if not np.isfinite(cost[j]):
            break
        alloc = Allocation(theta, float(p_p[j]), float(levels[j]), p_s)
        if check_feasible(pair, alloc).ok:
            return alloc
    return None


def snap_to_grid(pair: LinkPair, theta: float) -> Allocation | None:
    """Cheapest feasible grid allocation near a continuous theta.

    Looks at the two grid thetas around ``theta`` and two more on each side.
    """
    thetas = pair.grid.thetas
    idx = int(np.searchsorted(thetas, theta))
    best = None
    for j in range(max(idx - 3, 0), min(idx + 3, len(thetas))):
        cand = _grid_candidate(pair, float(thetas[j]))
        if cand is None:
            continue
        cost = wsp(pair, cand)
        if best is None or cost < best[0]:
            best = (cost, cand)
    return None if best is None else best[1]


def build_result(pair: LinkPair, theta: float, trace=None, status="ok", snapped=None) -> SolveResult:
    """Package a continuous theta into a SolveResult (powers from the LP and p_s floor)."""
    lp = lp2.solve_lp(pair, theta)
    p_s = power_floors(pair, theta)[1]
    cont = Allocation(theta, lp.p_p, lp.p_r, p_s)
    if snapped is None:
        snapped = snap_to_grid(pair, theta)
    return SolveResult(
        continuous=cont,
        snapped=snapped,
        trace=trace,
        case=lp.case,
        continuous_metrics=metrics(pair, cont),
        snapped_metrics=metrics(pair, snapped) if snapped is not None else None,
        status=status,
    )


def allocate(
    pair: LinkPair,
    config: NewtonConfig = NewtonConfig(),
    previous_theta: float | None = None,
) -> SolveResult:
    """Proposed scheme: Newton on theta, then LP powers and a grid snap.

    Raises Infeasible when the pair has no feasible theta.  An unconverged
    Newton run still yields a result, taken at the midpoint of the last
    bracket, with ``status="unconverged"``.
    """
    try:
        theta, trace = newton_solve(pair, config, previous_theta)
        status = "ok"
    except Unconverged as exc:
        a, b = exc.bracket
        theta, trace, status = 0.5 * (a + b), exc.trace, "unconverged"
    return build_result(pair, theta, trace, status)
