"""Domain types and closed-form formulas for a matched primary/secondary link pair.

All powers are in watts internally; dBm only appears at I/O boundaries.
Spectral efficiencies are in bps/Hz and ``theta`` is the fraction of a
subframe given to each of the two relay phases (the secondary link gets
``1 - 2*theta``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidAllocation, InvalidInput

REL_TOL = 1e-9
LN2 = math.log(2.0)


def dbm_to_watt(x: float) -> float:
    if not math.isfinite(x):
        raise InvalidInput(f"non-finite dBm value: {x!r}")
    return 10.0 ** ((x - 30.0) / 10.0)


def watt_to_dbm(x: float) -> float:
    if not math.isfinite(x) or x <= 0:
        raise InvalidInput(f"watt value must be finite and positive, got {x!r}")
    return 10.0 * math.log10(x) + 30.0


def pow2(x: float) -> float:
    """``2**x`` that saturates to +inf instead of raising OverflowError."""
    try:
        return 2.0 ** float(x)
    except OverflowError:
        return math.inf


def _check_positive(name, value):
    if not (math.isfinite(value) and value > 0):
        raise InvalidInput(f"{name} must be finite and > 0, got {value!r}")


@dataclass(frozen=True)
class ChannelGains:
    """Noise-normalized channel gains (1/W): ``lambda_xy = g_xy / noise_power``.

    ``pp``: PT->PR, ``ps``: PT->SR, ``sp``: SR->PR, ``ss``: ST->SR.
    """

    lambda_pp: float
    lambda_ps: float
    lambda_sp: float
    lambda_ss: float

    def __post_init__(self):
        for name in ("lambda_pp", "lambda_ps", "lambda_sp", "lambda_ss"):
            _check_positive(name, getattr(self, name))

    def scaled(self, factors) -> "ChannelGains":
        """Multiply the four gains elementwise by ``factors`` (pp, ps, sp, ss)."""
        a, b, c, d = factors
        return ChannelGains(self.lambda_pp * a, self.lambda_ps * b,
                            self.lambda_sp * c, self.lambda_ss * d)


@dataclass(frozen=True)
class Weights:
    w_pt: float = 1.0
    w_sr: float = 1.0
    w_st: float = 1.0

    def __post_init__(self):
        for name in ("w_pt", "w_sr", "w_st"):
            _check_positive(name, getattr(self, name))


@dataclass(frozen=True)
class QosReq:
    q_p: float
    q_s: float

    def __post_init__(self):
        _check_positive("q_p", self.q_p)
        _check_positive("q_s", self.q_s)


@dataclass(frozen=True)
class ResourceGrid:
    """Power box ``[p_min, p_max]`` (W) with its dB-spaced levels and the theta levels.

    Power levels are ``p_min * 10**(k*delta_p/10)`` up to ``p_max``; theta
    levels are ``k*delta_theta`` strictly below 0.5.
    """

    p_min: float
    p_max: float
    delta_p: float = 1.0
    delta_theta: float = 0.005

    def __post_init__(self):
        _check_positive("p_min", self.p_min)
        _check_positive("p_max", self.p_max)
        _check_positive("delta_p", self.delta_p)
        if not self.p_min < self.p_max:
            raise InvalidInput("p_min must be < p_max")
        if not 0 < self.delta_theta < 0.25:
            raise InvalidInput("delta_theta must lie in (0, 0.25)")

    @classmethod
    def from_dbm(cls, p_min_dbm, p_max_dbm, delta_p=1.0, delta_theta=0.005):
        return cls(dbm_to_watt(p_min_dbm), dbm_to_watt(p_max_dbm), delta_p, delta_theta)

    @cached_property
    def powers(self) -> np.ndarray:
        span_db = 10.0 * math.log10(self.p_max / self.p_min)
        n = int(math.floor(span_db / self.delta_p + 1e-9)) + 1
        levels = self.p_min * 10.0 ** (np.arange(n) * self.delta_p / 10.0)
        levels[0] = self.p_min
        if abs(levels[-1] - self.p_max) <= 1e-9 * self.p_max:
            levels[-1] = self.p_max
        levels.setflags(write=False)
        return levels

    @cached_property
    def thetas(self) -> np.ndarray:
        k = np.arange(1, int(math.ceil(0.5 / self.delta_theta)) + 1)
        levels = k * self.delta_theta
        levels = levels[levels < 0.5 - 1e-12]
        levels.setflags(write=False)
        return levels

    def round_up_power(self, p: float) -> float | None:
        """Smallest power level >= ``p`` (relative slack 1e-9), or None above ``p_max``."""
        levels = self.powers
        idx = int(np.searchsorted(levels, p * (1.0 - REL_TOL), side="left"))
        if idx >= len(levels):
            return None
        return float(levels[idx])


@dataclass(frozen=True)
class LinkPair:
    gains: ChannelGains
    weights: Weights
    qos: QosReq
    grid: ResourceGrid

    def replace(self, **changes) -> "LinkPair":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class Allocation:
    theta: float
    p_p: float
    p_r: float
    p_s: float


@dataclass(frozen=True)
class Metrics:
    wsp: float
    s_p: float
    s_s: float
    ee: float
    u: float
    v: float


@dataclass(frozen=True)
class FeasibilityVerdict:
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def _check_theta(theta, exc=InvalidAllocation):
    if not (math.isfinite(theta) and 0.0 < theta < 0.5):
        raise exc(f"theta must lie in (0, 0.5), got {theta!r}")


def wsp_split(pair: LinkPair, alloc: Allocation) -> tuple[float, float]:
    """Primary and secondary contributions ``(u, v)`` to the weighted sum power."""
    _check_theta(alloc.theta)
    w = pair.weights
    u = w.w_pt * alloc.theta * alloc.p_p + w.w_sr * alloc.theta * alloc.p_r
    v = w.w_st * (1.0 - 2.0 * alloc.theta) * alloc.p_s
    return u, v


def wsp(pair: LinkPair, alloc: Allocation) -> float:
    u, v = wsp_split(pair, alloc)
    return u + v


def primary_se(pair: LinkPair, alloc: Allocation) -> float:
    g = pair.gains
    snr = min(g.lambda_ps * alloc.p_p, g.lambda_pp * alloc.p_p + g.lambda_sp * alloc.p_r)
    return alloc.theta * math.log2(1.0 + snr)


def secondary_se(pair: LinkPair, alloc: Allocation) -> float:
    return (1.0 - 2.0 * alloc.theta) * math.log2(1.0 + pair.gains.lambda_ss * alloc.p_s)


def primary_threshold(q_p: float, theta: float) -> float:
    """Required combined SNR ``2**(q_p/theta) - 1`` at the primary receiver."""
    return pow2(q_p / theta) - 1.0


def secondary_threshold(q_s: float, theta: float) -> float:
    return pow2(q_s / (1.0 - 2.0 * theta)) - 1.0


def power_floors(pair: LinkPair, theta: float) -> tuple[float, float]:
    """Lower bounds ``(p_p_low, p_s_low)`` implied by the two QoS targets.

    Either may exceed ``p_max`` (or be +inf for theta near the domain ends);
    feasibility is the caller's business.
    """
    _check_theta(theta, InvalidInput)
    p_min = pair.grid.p_min
    p_p_low = max(p_min, primary_threshold(pair.qos.q_p, theta) / pair.gains.lambda_ps)
    p_s_low = max(p_min, secondary_threshold(pair.qos.q_s, theta) / pair.gains.lambda_ss)
    return p_p_low, p_s_low


def energy_efficiency(pair: LinkPair, alloc: Allocation) -> float:
    """Sum spectral efficiency per unit of (unweighted) consumed power."""
    theta = alloc.theta
    denom = theta * alloc.p_p + theta * alloc.p_r + (1.0 - 2.0 * theta) * alloc.p_s
    if not denom > 0:
        raise InvalidAllocation("energy efficiency undefined for zero consumed power")
    return (primary_se(pair, alloc) + secondary_se(pair, alloc)) / denom


def metrics(pair: LinkPair, alloc: Allocation) -> Metrics:
    u, v = wsp_split(pair, alloc)
    return Metrics(
        wsp=u + v,
        s_p=primary_se(pair, alloc),
        s_s=secondary_se(pair, alloc),
        ee=energy_efficiency(pair, alloc),
        u=u,
        v=v,
    )


def check_feasible(pair: LinkPair, alloc: Allocation) -> FeasibilityVerdict:
    """List every violated constraint of the WSP problem; empty means feasible.

    Labels: ``6a`` theta range, ``6b`` combined-SNR constraint, ``6c``/``6d``/``6e``
    power boxes of p_p/p_r/p_s (with their QoS floors), ``qos_primary`` and
    ``qos_secondary`` for the spectral-efficiency targets.
    """
    theta = alloc.theta
    if not (math.isfinite(theta) and 0.0 < theta < 0.5):
        return FeasibilityVerdict(("6a",))
    g, q, grid = pair.gains, pair.qos, pair.grid
    lo = 1.0 - REL_TOL
    hi = 1.0 + REL_TOL
    p_p_low, p_s_low = power_floors(pair, theta)
    bad = []
    if g.lambda_pp * alloc.p_p + g.lambda_sp * alloc.p_r < primary_threshold(q.q_p, theta) * lo:
        bad.append("6b")
    if not (p_p_low * lo <= alloc.p_p <= grid.p_max * hi):
        bad.append("6c")
    if not (grid.p_min * lo <= alloc.p_r <= grid.p_max * hi):
        bad.append("6d")
    if not (p_s_low * lo <= alloc.p_s <= grid.p_max * hi):
        bad.append("6e")
    if not all(math.isfinite(x) and x >= 0 for x in (alloc.p_p, alloc.p_r, alloc.p_s)):
        bad.extend(["qos_primary", "qos_secondary"])
        return FeasibilityVerdict(tuple(bad))
    if primary_se(pair, alloc) < q.q_p * lo:
        bad.append("qos_primary")
    if secondary_se(pair, alloc) < q.q_s * lo:
        bad.append("qos_secondary")
    return FeasibilityVerdict(tuple(bad))


def wsp_hessian(weights: Weights) -> np.ndarray:
    """Hessian of the WSP in the variable order (p_p, p_r, p_s, theta)."""
    w = weights
    h = np.zeros((4, 4))
    h[0, 3] = h[3, 0] = w.w_pt
    h[1, 3] = h[3, 1] = w.w_sr
    h[2, 3] = h[3, 2] = -2.0 * w.w_st
    return h


def wsp_hessian_eigenvalues(weights: Weights) -> tuple[float, float, float, float]:
    """Closed-form spectrum ``(0, 0, r, -r)`` with ``r = sqrt(w_pt^2 + 4 w_st^2 + w_sr^2)``.

    One negative eigenvalue means the WSP is not convex jointly in powers and theta.
    """
    w = weights
    r = math.sqrt(w.w_pt**2 + 4.0 * w.w_st**2 + w.w_sr**2)
    return (0.0, 0.0, r, -r)
