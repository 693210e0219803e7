"""Comparison schemes: grid-exhaustive optimum, random selection, KKT enumeration.

Also hosts the exhaustive energy-efficiency maximizer used to check how close
the equal-weight WSP optimum comes to the EE optimum.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import Infeasible, InvalidInput
from .model import (
    LN2,
    REL_TOL,
    Allocation,
    FeasibilityVerdict,
    LinkPair,
    check_feasible,
    metrics,
    wsp,
)
from .newton import SolveResult, feasible_theta_interval, snap_to_grid
from . import lp2

LO = 1.0 - REL_TOL
HI = 1.0 + REL_TOL


# --------------------------------------------------------------------------
# exhaustive search


def _theta_terms(pair: LinkPair, thetas: np.ndarray):
    q, g, p_min = pair.qos, pair.gains, pair.grid.p_min
    with np.errstate(over="ignore"):
        need_p = np.exp2(q.q_p / thetas) - 1.0
        need_s = np.exp2(q.q_s / (1.0 - 2.0 * thetas)) - 1.0
    p_p_low = np.maximum(p_min, need_p / g.lambda_ps)
    p_s_low = np.maximum(p_min, need_s / g.lambda_ss)
    return need_p, p_p_low, p_s_low


def _primary_block(pair: LinkPair, theta: float, need_p: float, p_p_low: float):
    """Feasibility mask and WSP part of every (p_p, p_r) grid pair at one theta."""
    g, w, grid = pair.gains, pair.weights, pair.grid
    pp = grid.powers[:, None]
    pr = grid.powers[None, :]
    combined = g.lambda_pp * pp + g.lambda_sp * pr
    snr = np.minimum(g.lambda_ps * pp, combined)
    ok = (
        (combined >= need_p * LO)
        & (pp >= p_p_low * LO)
        & (pp <= grid.p_max * HI)
        & (pr >= grid.p_min * LO)
        & (pr <= grid.p_max * HI)
        & (theta * np.log2(1.0 + snr) >= pair.qos.q_p * LO)
    )
    cost = w.w_pt * theta * pp + w.w_sr * theta * pr
    return ok, cost


def _secondary_block(pair: LinkPair, theta: float, p_s_low: float):
    g, w, grid = pair.gains, pair.weights, pair.grid
    ps = grid.powers
    s = 1.0 - 2.0 * theta
    ok = (
        (ps >= p_s_low * LO)
        & (ps <= grid.p_max * HI)
        & (s * np.log2(1.0 + g.lambda_ss * ps) >= pair.qos.q_s * LO)
    )
    return ok, w.w_st * s * ps


# tuples scored per numpy call in naive mode; small enough to stay in cache so
# the cost per tuple does not depend on the grid size
SLAB = 1 << 15


def _argmin_masked(ok, cost):
    if not ok.any():
        return None
    masked = np.where(ok, cost, np.inf)
    flat = int(np.argmin(masked))
    return float(masked.flat[flat]), np.unravel_index(flat, masked.shape)


def _exhaustive_search(pair: LinkPair, mode: str, banned=frozenset()):
    grid = pair.grid
    thetas = grid.thetas
    n = len(grid.powers)
    rows = max(1, SLAB // (n * n))
    need_p, p_p_low, p_s_low = _theta_terms(pair, thetas)
    best = None  # (cost, (ti, i, j, k))
    for ti, theta in enumerate(thetas):
        theta = float(theta)
        ok_p, cost_p = _primary_block(pair, theta, need_p[ti], p_p_low[ti])
        ok_s, cost_s = _secondary_block(pair, theta, p_s_low[ti])
        here = [idx[1:] for idx in banned if idx[0] == ti]
        if mode == "naive":
            # every (p_p, p_r, p_s) tuple, a slab of p_p rows at a time
            for i0 in range(0, n, rows):
                ok = ok_p[i0:i0 + rows, :, None] & ok_s[None, None, :]
                for i, j, k in here:
                    if i0 <= i < i0 + rows:
                        ok[i - i0, j, k] = False
                hit = _argmin_masked(ok, cost_p[i0:i0 + rows, :, None] + cost_s[None, None, :])
                if hit and (best is None or hit[0] < best[0]):
                    i, j, k = hit[1]
                    best = (hit[0], (ti, i0 + int(i), int(j), int(k)))
            continue
        if not ok_s.any():
            continue
        for i, j, _ in here:
            ok_p[i, j] = False
        k = int(np.argmax(ok_s))  # cheapest feasible p_s level
        hit = _argmin_masked(ok_p, cost_p + cost_s[k])
        if hit and (best is None or hit[0] < best[0]):
            i, j = hit[1]
            best = (hit[0], (ti, int(i), int(j), k))
    return best


def exhaustive_optimal(pair: LinkPair, mode: str = "reduced") -> SolveResult:
    """Grid-optimal allocation by enumeration.

    ``naive`` scores every (theta, p_p, p_r, p_s) tuple; ``reduced`` fixes p_s
    at its cheapest feasible level for each theta, since the WSP grows with
    p_s and p_s enters no other constraint.  Ties go to the smaller theta,
    then lexicographically smaller powers.
    """
    if mode not in ("naive", "reduced"):
        raise InvalidInput(f"unknown exhaustive mode {mode!r}")
    grid = pair.grid
    banned = set()
    while True:
        best = _exhaustive_search(pair, mode, frozenset(banned))
        if best is None:
            raise Infeasible("no feasible grid tuple")
        ti, i, j, k = best[1]
        alloc = Allocation(
            float(grid.thetas[ti]), float(grid.powers[i]), float(grid.powers[j]), float(grid.powers[k])
        )
        # vectorized and scalar checks can disagree by an ulp right at a boundary
        if check_feasible(pair, alloc).ok:
            break
        banned.add(best[1])
    m = metrics(pair, alloc)
    return SolveResult(alloc, alloc, None, lp2.solve_lp(pair, alloc.theta).case, m, m)


def ee_max_exhaustive(pair: LinkPair, max_iter: int = 100) -> SolveResult:
    """Feasible grid allocation with the largest energy efficiency.

    Uses Dinkelbach's parametric form: for a fixed ratio ``eta`` the objective
    ``S_p + S_s - eta * power`` splits into a (p_p, p_r) part and a p_s part at
    every theta, so each round costs one pass over the grid.  On a finite set
    the ratio sequence is strictly increasing and stops at the exact optimum.
    """
    grid = pair.grid
    thetas = grid.thetas
    need_p, p_p_low, p_s_low = _theta_terms(pair, thetas)
    g = pair.gains
    blocks = []
    for ti, theta in enumerate(thetas):
        theta = float(theta)
        ok_p, _ = _primary_block(pair, theta, need_p[ti], p_p_low[ti])
        ok_s, _ = _secondary_block(pair, theta, p_s_low[ti])
        if not (ok_p.any() and ok_s.any()):
            continue
        pp = grid.powers[:, None]
        pr = grid.powers[None, :]
        se_p = theta * np.log2(1.0 + np.minimum(g.lambda_ps * pp, g.lambda_pp * pp + g.lambda_sp * pr))
        pow_p = theta * pp + theta * pr
        se_s = (1.0 - 2.0 * theta) * np.log2(1.0 + g.lambda_ss * grid.powers)
        pow_s = (1.0 - 2.0 * theta) * grid.powers
        blocks.append((ti, ok_p, se_p, pow_p, ok_s, se_s, pow_s))
    if not blocks:
        raise Infeasible("no feasible grid tuple")

    def best_for(eta):
        best = None
        for ti, ok_p, se_p, pow_p, ok_s, se_s, pow_s in blocks:
            fp = np.where(ok_p, se_p - eta * pow_p, -np.inf)
            fs = np.where(ok_s, se_s - eta * pow_s, -np.inf)
            a = int(np.argmax(fp))
            k = int(np.argmax(fs))
            val = float(fp.flat[a] + fs[k])
            if best is None or val > best[0]:
                i, j = np.unravel_index(a, fp.shape)
                best = (val, ti, int(i), int(j), k)
        return best

    def alloc_of(b):
        _, ti, i, j, k = b
        return Allocation(float(thetas[ti]), float(grid.powers[i]), float(grid.powers[j]), float(grid.powers[k]))

    eta = 0.0
    alloc = alloc_of(best_for(eta))
    for _ in range(max_iter):
        eta_new = metrics(pair, alloc).ee
        if eta_new <= eta:
            break
        eta = eta_new
        nxt = alloc_of(best_for(eta))
        if metrics(pair, nxt).ee <= eta:
            break
        alloc = nxt
    m = metrics(pair, alloc)
    return SolveResult(alloc, alloc, None, None, m, m)


def ee_max_naive(pair: LinkPair) -> Allocation:
    """Reference EE maximizer scoring every grid tuple; small grids only."""
    grid = pair.grid
    best = None
    for theta in grid.thetas:
        for p_p, p_r, p_s in itertools.product(grid.powers, repeat=3):
            alloc = Allocation(float(theta), float(p_p), float(p_r), float(p_s))
            if not check_feasible(pair, alloc).ok:
                continue
            ee = metrics(pair, alloc).ee
            if best is None or ee > best[0]:
                best = (ee, alloc)
    if best is None:
        raise Infeasible("no feasible grid tuple")
    return best[1]


# --------------------------------------------------------------------------
# random scheme


def random_alloc(pair: LinkPair, seed=None) -> tuple[Allocation, FeasibilityVerdict]:
    """Uniform draws from the theta and power levels; constraints are not enforced."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    grid = pair.grid
    theta = float(rng.choice(grid.thetas))
    p_p, p_r, p_s = (float(x) for x in rng.choice(grid.powers, size=3))
    alloc = Allocation(theta, p_p, p_r, p_s)
    return alloc, check_feasible(pair, alloc)


# --------------------------------------------------------------------------
# KKT active-set enumeration

#: inequality constraints g_i <= 0 of the WSP problem, in bitmask order
CONSTRAINTS = (
    "theta>0",
    "theta<0.5",
    "snr",        # 2**(q_p/theta) - 1 - lambda_pp p_p - lambda_sp p_r
    "p_p>=low",
    "p_p<=max",
    "p_r>=min",
    "p_r<=max",
    "p_s>=low",
    "p_s<=max",
)
L = len(CONSTRAINTS)
_PRIMARY = (2, 3, 4, 5, 6)
#: relative residual accepted for a consistency root sitting on an interval end
END_TOL = 1e-12
_SECONDARY = (7, 8)


@dataclass(frozen=True)
class KktCandidate:
    allocation: Allocation
    active: int  # bitmask over CONSTRAINTS
    multipliers: tuple
    residual: float
    multipliers_valid: bool

    def active_names(self):
        return [CONSTRAINTS[i] for i in range(L) if self.active >> i & 1]


@dataclass
class KktReport:
    candidates: list
    patterns_total: int
    patterns_examined: int
    root_finds: int  # patterns needing a numeric solve of F(theta) = 0


class _Branch:
    """theta-dependent terms of the problem on one smooth piece."""

    def __init__(self, pair: LinkPair, p_decode: bool, s_decode: bool):
        self.pair = pair
        self.p_decode = p_decode
        self.s_decode = s_decode

    def terms(self, theta):
        pair = self.pair
        q, g, p_min = pair.qos, pair.gains, pair.grid.p_min
        theta = np.asarray(theta, dtype=float)
        s = 1.0 - 2.0 * theta
        with np.errstate(over="ignore", invalid="ignore"):
            e_p = np.exp2(q.q_p / theta)
            e_s = np.exp2(q.q_s / s)
            c = e_p - 1.0
            dc = -e_p * q.q_p * LN2 / theta**2
            if self.p_decode:
                p_low, dp_low = c / g.lambda_ps, dc / g.lambda_ps
            else:
                p_low, dp_low = np.full_like(theta, p_min), np.zeros_like(theta)
            if self.s_decode:
                s_low = (e_s - 1.0) / g.lambda_ss
                ds_low = e_s * q.q_s * LN2 * 2.0 / s**2 / g.lambda_ss
            else:
                s_low, ds_low = np.full_like(theta, p_min), np.zeros_like(theta)
        return c, dc, p_low, dp_low, s_low, ds_low


def _rows(pair: LinkPair, active_p, c, p_low):
    """Linear equations a*p_p + b*p_r = r for the active primary constraints."""
    g, grid = pair.gains, pair.grid
    out = []
    for i in active_p:
        if i == 2:
            out.append((g.lambda_pp, g.lambda_sp, c))
        elif i == 3:
            out.append((1.0, 0.0, p_low))
        elif i == 4:
            out.append((1.0, 0.0, grid.p_max))
        elif i == 5:
            out.append((0.0, 1.0, grid.p_min))
        else:
            out.append((0.0, 1.0, grid.p_max))
    return out


def _grad_power(pair: LinkPair, i: int):
    """(d/dp_p, d/dp_r, d/dp_s) of constraint i."""
    g = pair.gains
    return {
        2: (-g.lambda_pp, -g.lambda_sp, 0.0),
        3: (-1.0, 0.0, 0.0),
        4: (1.0, 0.0, 0.0),
        5: (0.0, -1.0, 0.0),
        6: (0.0, 1.0, 0.0),
        7: (0.0, 0.0, -1.0),
        8: (0.0, 0.0, 1.0),
    }[i]


def _full_gradient(pair, i, dc, dp_low, ds_low):
    gp = _grad_power(pair, i)
    dtheta = {2: dc, 3: dp_low, 7: ds_low}.get(i, 0.0)
    return np.array(gp + (dtheta,))


def _objective_gradient(pair, alloc):
    w = pair.weights
    t = alloc.theta
    return np.array([
        w.w_pt * t,
        w.w_sr * t,
        w.w_st * (1.0 - 2.0 * t),
        w.w_pt * alloc.p_p + w.w_sr * alloc.p_r - 2.0 * w.w_st * alloc.p_s,
    ])


def _solve_powers(rows2):
    (a1, b1, r1), (a2, b2, r2) = rows2
    det = a1 * b2 - a2 * b1
    return (r1 * b2 - r2 * b1) / det, (a1 * r2 - a2 * r1) / det


def _roots(fun, lo, hi, samples, end_tol=0.0):
    """Sign changes of ``fun`` on a scan, refined by Brent's method.

    The interval ends also count as roots when ``|fun| <= end_tol`` there;
    consistency equations often vanish exactly at a feasibility boundary,
    where rounding leaves no sign change to detect.
    """
    xs = np.unique(np.concatenate(([lo, hi], samples[(samples > lo) & (samples < hi)])))
    with np.errstate(all="ignore"):
        ys = np.broadcast_to(fun(xs), xs.shape)
    out = []
    for k in (0, len(xs) - 1):
        if np.isfinite(ys[k]) and abs(ys[k]) <= end_tol:
            out.append(float(xs[k]))
    for k in range(len(xs) - 1):
        y0, y1 = ys[k], ys[k + 1]
        if not (np.isfinite(y0) and np.isfinite(y1)):
            continue
        if y0 == 0.0:
            out.append(float(xs[k]))
        elif y0 * y1 < 0.0:
            out.append(brentq(lambda t: float(fun(np.array([t]))[0]), xs[k], xs[k + 1],
                              xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))
    return sorted(set(out))


def _pieces(pair: LinkPair):
    """Split the feasible theta interval where p_p_low or p_s_low switch branch."""
    interval = feasible_theta_interval(pair)
    if interval is None:
        return []
    lo, hi = interval
    q, g, p_min = pair.qos, pair.gains, pair.grid.p_min
    # p_p_low follows the decode bound below t_p, p_s_low follows its bound above t_s
    t_p = q.q_p / math.log2(1.0 + g.lambda_ps * p_min)
    t_s = 0.5 * (1.0 - q.q_s / math.log2(1.0 + g.lambda_ss * p_min))
    cuts = sorted({lo, hi, *(t for t in (t_p, t_s) if lo < t < hi)})
    out = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (a + b)
        out.append((a, b, mid < t_p, mid > t_s))
    return out


def kkt_candidates(pair: LinkPair) -> KktReport:
    """All KKT points of the WSP problem found by active-set enumeration.

    Every subset of the nine constraints is tried as the active set.  The two
    open theta bounds can never be active, which prunes 512 patterns to 128.
    For the rest, the active primary constraints fix (p_p, p_r), the active
    secondary constraint fixes p_s, the power rows of the stationarity system
    give the multipliers, and the theta row leaves one scalar equation
    ``F(theta) = 0`` solved by scanning the theta levels and bracketing sign
    changes.  Candidates must be primal feasible with nonnegative multipliers.
    """
    thetas_grid = pair.grid.thetas
    w = pair.weights
    cands = []
    examined = root_finds = 0
    pieces = _pieces(pair)
    for mask in range(1 << L):
        if mask & 0b11:
            continue
        examined += 1
        active = [i for i in range(L) if mask >> i & 1]
        act_p = [i for i in active if i in _PRIMARY]
        act_s = [i for i in active if i in _SECONDARY]
        if not act_s or len(act_p) < 2 or len(act_p) + len(act_s) > 4:
            continue
        for lo, hi, p_dec, s_dec in pieces:
            br = _Branch(pair, p_dec, s_dec)
            rows_const = _rows(pair, act_p, 0.0, 0.0)
            pair_idx = None
            for a_, b_ in itertools.combinations(range(len(act_p)), 2):
                (a1, b1, _), (a2, b2, _) = rows_const[a_], rows_const[b_]
                if abs(a1 * b2 - a2 * b1) > 0:
                    pair_idx = (a_, b_)
                    break
            if pair_idx is None:
                continue  # (p_p, p_r) not pinned down
            extra_p = [k for k in range(len(act_p)) if k not in pair_idx]

            def powers(theta):
                c, dc, p_low, dp_low, s_low, ds_low = br.terms(theta)
                rows = _rows(pair, act_p, c, p_low)
                shape = np.shape(theta)
                p_p, p_r = (np.broadcast_to(x, shape) for x in
                            _solve_powers([rows[pair_idx[0]], rows[pair_idx[1]]]))
                p_s = np.broadcast_to(s_low if act_s[0] == 7 else pair.grid.p_max, shape)
                return rows, p_p, p_r, p_s, (dc, dp_low, ds_low)

            if not extra_p and len(act_s) == 1:
                # multipliers from the power rows, then the theta row as F(theta)
                gi, gj = (_grad_power(pair, act_p[k]) for k in pair_idx)
                m = np.array([[gi[0], gj[0]], [gi[1], gj[1]]])
                minv = np.linalg.inv(m)
                sg = _grad_power(pair, act_s[0])[2]

                def F(theta, _minv=minv, _sg=sg):
                    rows, p_p, p_r, p_s, (dc, dp_low, ds_low) = powers(theta)
                    mu_i = -(_minv[0, 0] * w.w_pt * theta + _minv[0, 1] * w.w_sr * theta)
                    mu_j = -(_minv[1, 0] * w.w_pt * theta + _minv[1, 1] * w.w_sr * theta)
                    mu_s = -w.w_st * (1.0 - 2.0 * theta) / _sg
                    dth = {2: dc, 3: dp_low, 7: ds_low}
                    val = w.w_pt * p_p + w.w_sr * p_r - 2.0 * w.w_st * p_s
                    val = val + mu_i * dth.get(act_p[pair_idx[0]], 0.0)
                    val = val + mu_j * dth.get(act_p[pair_idx[1]], 0.0)
                    val = val + mu_s * dth.get(act_s[0], 0.0)
                    return val

                root_finds += 1
                roots = _roots(F, lo, hi, thetas_grid)
            elif len(extra_p) == 1 and len(act_s) == 1:
                k = extra_p[0]

                def R(theta, _k=k):
                    rows, p_p, p_r, _, _ = powers(theta)
                    a, b, r = rows[_k]
                    return (a * p_p + b * p_r - r) / (abs(a * p_p) + abs(b * p_r) + abs(r))

                roots = _roots(R, lo, hi, thetas_grid, END_TOL)
            elif not extra_p and len(act_s) == 2:
                def R(theta):
                    return br.terms(theta)[4] / pair.grid.p_max - 1.0

                roots = _roots(R, lo, hi, thetas_grid, END_TOL)
            else:
                continue
            for theta in roots:
                cand = _finish_candidate(pair, mask, active, theta, powers)
                if cand is not None:
                    cands.append(cand)
    return KktReport(cands, 1 << L, examined, root_finds)


def _finish_candidate(pair, mask, active, theta, powers):
    if not 0.0 < theta < 0.5:
        return None
    _, p_p, p_r, p_s, (dc, dp_low, ds_low) = powers(np.array([theta]))
    alloc = Allocation(float(theta), float(p_p[0]), float(p_r[0]), float(p_s[0]))
    if not all(math.isfinite(x) for x in (alloc.p_p, alloc.p_r, alloc.p_s)):
        return None
    if not check_feasible(pair, alloc).ok:
        return None
    grads = np.column_stack([
        _full_gradient(pair, i, float(dc[0]), float(dp_low[0]), float(ds_low[0])) for i in active
    ])
    rhs = -_objective_gradient(pair, alloc)
    mu, *_ = np.linalg.lstsq(grads, rhs, rcond=None)
    residual = float(np.max(np.abs(grads @ mu - rhs)))
    scale = max(1.0, float(np.max(np.abs(rhs))))
    valid = bool(np.all(mu >= -1e-9 * scale))
    if residual > 1e-6 or not valid:
        return None
    full = [0.0] * L
    for i, m in zip(active, mu):
        full[i] = float(m)
    return KktCandidate(alloc, mask, tuple(full), residual, valid)


def kkt_alloc(pair: LinkPair) -> SolveResult:
    """Cheapest KKT point, snapped to the grid like the proposed scheme."""
    report = kkt_candidates(pair)
    if not report.candidates:
        raise Infeasible("no KKT point found")
    best = min(report.candidates, key=lambda c: (wsp(pair, c.allocation), c.active))
    cont = best.allocation
    snapped = snap_to_grid(pair, cont.theta)
    return SolveResult(
        continuous=cont,
        snapped=snapped,
        trace=None,
        case=lp2.solve_lp(pair, cont.theta).case,
        continuous_metrics=metrics(pair, cont),
        snapped_metrics=metrics(pair, snapped) if snapped is not None else None,
    )
