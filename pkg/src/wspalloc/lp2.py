"""Per-theta two-variable LP over (p_p, p_r), solved by corner/edge analysis.

For fixed theta the primary part of the WSP is ``theta * (w_pt p_p + w_sr p_r)``
and the feasible set is the box ``[p_p_low, p_max] x [p_min, p_max]`` cut by
the half-plane ``lambda_pp p_p + lambda_sp p_r >= 2**(q_p/theta) - 1``.  The
optimum is found by comparing the isoline slope ``k_l = w_pt/w_sr`` with the
constraint slope ``k_m = lambda_pp/lambda_sp`` and checking on which edge of
the box the constraint line enters.  Box corners are named
A = (p_max, p_max), B = (p_p_low, p_max), C = (p_p_low, p_min),
D = (p_max, p_min).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import InternalInconsistency
from .model import LN2, LinkPair, power_floors, primary_threshold, pow2

#: theta half-width used to detect a case change around an evaluation point
KINK_WINDOW = 1e-6


class CaseId(str, enum.Enum):
    CASE1_AB = "case1_AB"
    CASE2_BC_FLOOR = "case2_BC_floor"
    CASE2_BC_DECODE = "case2_BC_decode"
    CASE3_CD = "case3_CD"
    CASE4_DA = "case4_DA"
    CASE5_CORNER_C = "case5_C"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class CaseGeometry:
    theta: float
    k_l: float
    k_m: float
    threshold: float  # 2**(q_p/theta) - 1
    p_p_low: float
    p_s_low: float
    p_min: float
    p_max: float
    lambda_pp: float
    lambda_ps: float
    lambda_sp: float

    def f(self, x: float, y: float) -> float:
        return self.theta * math.log2(1.0 + self.lambda_pp * x + self.lambda_sp * y)

    def g(self, y: float) -> float:
        """p_p on the constraint line for a given p_r."""
        return (self.threshold - self.lambda_sp * y) / self.lambda_pp

    def h(self, x: float) -> float:
        """p_r on the constraint line for a given p_p."""
        return (self.threshold - self.lambda_pp * x) / self.lambda_sp

    def snr(self, x: float, y: float) -> float:
        return self.lambda_pp * x + self.lambda_sp * y

    @property
    def f_corners(self) -> dict:
        lo, pmin, pmax = self.p_p_low, self.p_min, self.p_max
        return {
            "C": self.f(lo, pmin),
            "B": self.f(lo, pmax),
            "D": self.f(pmax, pmin),
            "A": self.f(pmax, pmax),
        }

    @property
    def feasible(self) -> bool:
        return (
            self.snr(self.p_max, self.p_max) >= self.threshold
            and self.p_p_low <= self.p_max
            and self.p_s_low <= self.p_max
        )


@dataclass(frozen=True)
class LpSolution:
    theta: float
    p_p: float
    p_r: float
    case: CaseId
    u: float
    u_prime: float
    u_double_prime: float
    derivative_valid: bool


def case_geometry(pair: LinkPair, theta: float) -> CaseGeometry:
    g, w, grid = pair.gains, pair.weights, pair.grid
    p_p_low, p_s_low = power_floors(pair, theta)
    return CaseGeometry(
        theta=theta,
        k_l=w.w_pt / w.w_sr,
        k_m=g.lambda_pp / g.lambda_sp,
        threshold=primary_threshold(pair.qos.q_p, theta),
        p_p_low=p_p_low,
        p_s_low=p_s_low,
        p_min=grid.p_min,
        p_max=grid.p_max,
        lambda_pp=g.lambda_pp,
        lambda_ps=g.lambda_ps,
        lambda_sp=g.lambda_sp,
    )


def classify(geo: CaseGeometry) -> CaseId:
    # f(x, y) >= q_p  <=>  snr(x, y) >= threshold; comparing SNRs avoids log rounding
    if not geo.feasible:
        return CaseId.INFEASIBLE
    c = geo.threshold
    lo, pmin, pmax = geo.p_p_low, geo.p_min, geo.p_max
    if geo.k_l >= geo.k_m:
        if geo.snr(lo, pmax) < c:
            return CaseId.CASE1_AB
        if geo.snr(lo, pmin) < c:
            if pmin * geo.lambda_ps >= c:
                return CaseId.CASE2_BC_FLOOR
            return CaseId.CASE2_BC_DECODE
        return CaseId.CASE5_CORNER_C
    if geo.snr(lo, pmin) >= c:
        return CaseId.CASE5_CORNER_C
    if geo.snr(pmax, pmin) > c:
        return CaseId.CASE3_CD
    return CaseId.CASE4_DA


def _optimizer(geo: CaseGeometry, case: CaseId) -> tuple[float, float]:
    pmin, pmax = geo.p_min, geo.p_max
    if case is CaseId.CASE1_AB:
        return geo.g(pmax), pmax
    if case in (CaseId.CASE2_BC_FLOOR, CaseId.CASE2_BC_DECODE):
        return geo.p_p_low, geo.h(geo.p_p_low)
    if case is CaseId.CASE3_CD:
        return geo.g(pmin), pmin
    if case is CaseId.CASE4_DA:
        return pmax, geo.h(pmax)
    if case is CaseId.CASE5_CORNER_C:
        return geo.p_p_low, pmin
    raise InternalInconsistency(f"no optimizer for {case}")


def _piece(pair: LinkPair, theta: float) -> tuple:
    """Identifies the smooth piece of u(theta): the case plus which branch sets p_p_low."""
    if not 0.0 < theta < 0.5:
        return (CaseId.INFEASIBLE, None)
    geo = case_geometry(pair, theta)
    case = classify(geo)
    decode = geo.threshold / pair.gains.lambda_ps > pair.grid.p_min
    return (case, decode if case is CaseId.CASE5_CORNER_C else None)


def _u_derivatives(pair: LinkPair, geo: CaseGeometry, case: CaseId, case5_edge_formula: bool):
    g, w = pair.gains, pair.weights
    theta, q_p = geo.theta, pair.qos.q_p
    pmin, pmax = geo.p_min, geo.p_max
    a = q_p * LN2
    e = pow2(q_p / theta)
    bracket = (1.0 - a / theta) * e - 1.0  # d/dtheta [theta * (2**(q_p/theta) - 1)]
    curv = a * a / theta**3 * e  # its theta-derivative

    if case is CaseId.CASE1_AB:
        c1 = w.w_pt / g.lambda_pp
        return c1 * (bracket - g.lambda_sp * pmax) + w.w_sr * pmax, c1 * curv
    if case is CaseId.CASE2_BC_FLOOR:
        c2 = w.w_sr / g.lambda_sp
        return w.w_pt * pmin + c2 * (bracket - g.lambda_pp * pmin), c2 * curv
    if case is CaseId.CASE2_BC_DECODE:
        coef = (w.w_sr / g.lambda_ps) * (geo.k_l - geo.k_m + g.lambda_ps / g.lambda_sp)
        return coef * bracket, coef * curv
    if case is CaseId.CASE3_CD or (case is CaseId.CASE5_CORNER_C and case5_edge_formula):
        c3 = w.w_pt / g.lambda_pp
        return c3 * (bracket - g.lambda_sp * pmin) + w.w_sr * pmin, c3 * curv
    if case is CaseId.CASE4_DA:
        c4 = w.w_sr / g.lambda_sp
        return w.w_pt * pmax + c4 * (bracket - g.lambda_pp * pmax), c4 * curv
    if case is CaseId.CASE5_CORNER_C:
        # realized trajectory theta * (w_pt p_p_low(theta) + w_sr p_min)
        if geo.threshold / g.lambda_ps > pmin:
            c5 = w.w_pt / g.lambda_ps
            return c5 * bracket + w.w_sr * pmin, c5 * curv
        return (w.w_pt + w.w_sr) * pmin, 0.0
    raise InternalInconsistency(f"no derivatives for {case}")


def solve_lp(pair: LinkPair, theta: float, case5_edge_formula: bool = False) -> LpSolution:
    """Optimal (p_p, p_r) at a fixed theta, with u(theta) and its first two derivatives.

    ``case5_edge_formula=True`` makes corner C reuse the CD-edge formulas for the
    derivatives instead of differentiating the corner's own trajectory.
    """
    geo = case_geometry(pair, theta)
    case = classify(geo)
    if case is CaseId.INFEASIBLE:
        nan = math.nan
        return LpSolution(theta, nan, nan, case, nan, nan, nan, False)
    p_p, p_r = _optimizer(geo, case)
    w = pair.weights
    u = theta * (w.w_pt * p_p + w.w_sr * p_r)
    du, d2u = _u_derivatives(pair, geo, case, case5_edge_formula)
    here = _piece(pair, theta)
    valid = (
        _piece(pair, theta - KINK_WINDOW) == here
        and _piece(pair, theta + KINK_WINDOW) == here
    )
    return LpSolution(theta, p_p, p_r, case, u, du, d2u, valid)


def u_derivatives(pair: LinkPair, theta: float, case: CaseId, case5_edge_formula: bool = False):
    """``(u, u', u'')`` at ``theta`` using the formulas of ``case``.

    Raises InternalInconsistency when ``theta`` does not fall in ``case``.
    """
    geo = case_geometry(pair, theta)
    actual = classify(geo)
    if case is CaseId.INFEASIBLE or actual is not case:
        raise InternalInconsistency(f"theta={theta} lies in {actual.value}, not {case.value}")
    p_p, p_r = _optimizer(geo, case)
    w = pair.weights
    du, d2u = _u_derivatives(pair, geo, case, case5_edge_formula)
    return theta * (w.w_pt * p_p + w.w_sr * p_r), du, d2u
