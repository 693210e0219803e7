"""Pairing M primary links with N secondary relays.

Each (primary, secondary) combination is an independent single-pair problem;
its snapped minimal WSP becomes an edge cost and the pairing itself is a
minimum-weight bipartite assignment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import newton
from .errors import Infeasible, InvalidInput, InvalidScenario
from .sim import Scenario, link_pair


@dataclass(frozen=True)
class CostMatrix:
    """Pair costs in watts; infeasible entries hold ``sentinel``.

    ``sentinel`` is one plus the sum of all finite entries, so it is strictly
    larger than any assignment built from feasible pairs alone.
    """

    costs: np.ndarray
    infeasible: np.ndarray
    sentinel: float
    primaries: tuple = ()
    secondaries: tuple = ()

    @classmethod
    def from_costs(cls, costs, primaries=(), secondaries=()) -> "CostMatrix":
        """Wrap a matrix where non-finite entries mark infeasible pairs."""
        c = np.array(costs, dtype=float)
        if c.ndim != 2 or 0 in c.shape:
            raise InvalidInput("cost matrix must be 2-D and nonempty")
        bad = ~np.isfinite(c)
        if (c[~bad] < 0).any():
            raise InvalidInput("finite costs must be >= 0")
        sentinel = 1.0 + float(c[~bad].sum())
        c[bad] = sentinel
        c.setflags(write=False)
        bad.setflags(write=False)
        return cls(c, bad, sentinel, tuple(primaries), tuple(secondaries))

    @property
    def shape(self):
        return self.costs.shape


@dataclass(frozen=True)
class Assignment:
    pairs: tuple  # (row, col, cost) sorted by row
    total: float
    unmatched_rows: tuple
    unmatched_cols: tuple

    def as_dict(self) -> dict:
        return {i: j for i, j, _ in self.pairs}


def random_links(rng: np.random.Generator, count: int, radius: float) -> tuple:
    """``count`` transmitter/receiver point pairs, each point uniform on the disk."""
    def point():
        r = radius * math.sqrt(rng.random())
        phi = 2.0 * math.pi * rng.random()
        return (r * math.cos(phi), r * math.sin(phi))

    return tuple((point(), point()) for _ in range(count))


def pairwise_cost_matrix(primaries, secondaries, base: Scenario | None = None,
                         config: newton.NewtonConfig = newton.NewtonConfig()) -> CostMatrix:
    """Snapped WSP of every (primary, secondary) combination.

    A primary is a ``(pt, pr)`` pair of points and a secondary a ``(st, sr)``
    pair; everything else (path loss, QoS, grid, weights) comes from ``base``.
    """
    if not primaries or not secondaries:
        raise InvalidInput("need at least one primary and one secondary")
    base = base or Scenario()
    costs = np.full((len(primaries), len(secondaries)), np.inf)
    for i, (pt, pr) in enumerate(primaries):
        for j, (st, sr) in enumerate(secondaries):
            try:
                pair = link_pair(replace(base, pt=tuple(pt), pr=tuple(pr), st=tuple(st), sr=tuple(sr)))
                res = newton.allocate(pair, config)
            except (Infeasible, InvalidScenario):
                continue
            costs[i, j] = res.wsp
    return CostMatrix.from_costs(costs, primaries, secondaries)


def kuhn_munkres(costs) -> Assignment:
    """Minimum-total-cost assignment of ``min(M, N)`` pairs.

    Accepts a CostMatrix or any 2-D array (non-finite entries are treated as
    infeasible).  Pairs that land on an infeasible entry are dropped and
    their row and column reported as unmatched.
    """
    cm = costs if isinstance(costs, CostMatrix) else CostMatrix.from_costs(costs)
    rows, cols = linear_sum_assignment(cm.costs)
    pairs = [
        (int(i), int(j), float(cm.costs[i, j]))
        for i, j in zip(rows, cols)
        if not cm.infeasible[i, j]
    ]
    used_r = {i for i, _, _ in pairs}
    used_c = {j for _, j, _ in pairs}
    m, n = cm.shape
    return Assignment(
        pairs=tuple(sorted(pairs)),
        total=float(sum(c for _, _, c in pairs)),
        unmatched_rows=tuple(i for i in range(m) if i not in used_r),
        unmatched_cols=tuple(j for j in range(n) if j not in used_c),
    )
