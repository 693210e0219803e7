import math
import sys

import numpy as np
import pytest

from wspalloc import lp2, newton
from wspalloc.model import ChannelGains, LinkPair, QosReq, ResourceGrid, Weights


def worked_pair(grid=None):
    return LinkPair(
        ChannelGains(1.0, 2.0, 1.0, 15.0),
        Weights(),
        QosReq(1.0, 1.0),
        grid or ResourceGrid(0.01, 10.0),
    )


def random_pair(rng, grid=None, equal_weights=False, lam_hi=2.0):
    """Random pair with a nonempty feasible theta interval; gains in 10^[-1, lam_hi]."""
    grid = grid or ResourceGrid(0.01, 10.0)
    while True:
        lam = 10.0 ** rng.uniform(-1.0, lam_hi, 4)
        w = (1.0, 1.0, 1.0) if equal_weights else tuple(10.0 ** rng.uniform(-0.7, 0.7, 3))
        q = rng.uniform(0.1, 2.0, 2)
        pair = LinkPair(ChannelGains(*lam), Weights(*w), QosReq(*q), grid)
        if newton.feasible_theta_interval(pair) is not None:
            try:
                newton._inner_interval(pair)
            except Exception:
                continue
            return pair


def random_theta(rng, pair):
    lo, hi = newton._inner_interval(pair)
    return float(lo + (hi - lo) * rng.uniform(0.001, 0.999))


def smooth_at(pair, theta, h):
    """True when neither the LP piece nor the p_s floor branch changes within +-2h."""
    here = (lp2._piece(pair, theta), newton._v_floor(pair, theta))
    return all(
        (lp2._piece(pair, t), newton._v_floor(pair, t)) == here
        for t in (theta - 2 * h, theta - h, theta + h, theta + 2 * h)
    )


def lp_grid_minimum(pair, theta, n=400):
    """Minimum of w_pt x + w_sr y over an n x n grid of the feasible polygon,
    with the objective change of one grid step."""
    geo = lp2.case_geometry(pair, theta)
    xs = np.linspace(geo.p_p_low, geo.p_max, n)
    ys = np.linspace(geo.p_min, geo.p_max, n)
    x, y = np.meshgrid(xs, ys, indexing="ij")
    ok = geo.lambda_pp * x + geo.lambda_sp * y >= geo.threshold * (1 - 1e-12)
    w = pair.weights
    obj = np.where(ok, w.w_pt * x + w.w_sr * y, np.inf)
    step = w.w_pt * (xs[1] - xs[0]) + w.w_sr * (ys[1] - ys[0])
    return float(obj.min()), step


@pytest.fixture
def pair():
    return worked_pair()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    lines = getattr(sys.modules.get("test_acceptance"), "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
