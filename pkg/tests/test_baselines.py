import itertools

import numpy as np
import pytest
from scipy.stats import chisquare

from conftest import random_pair, worked_pair
from wspalloc import baselines, newton
from wspalloc.errors import Infeasible, InvalidInput
from wspalloc.model import Allocation, QosReq, ResourceGrid, check_feasible, metrics, wsp


def brute_force(pair):
    grid = pair.grid
    best = None
    for theta in grid.thetas:
        for p in itertools.product(grid.powers, repeat=3):
            a = Allocation(float(theta), *(float(x) for x in p))
            if check_feasible(pair, a).ok:
                key = (wsp(pair, a), a.theta, a.p_p, a.p_r, a.p_s)
                best = key if best is None or key < best else best
    return best


def test_tiny_grid_enumeration_example():
    # levels {0.01, 0.1, 1} W and theta in {0.1, 0.2, 0.3, 0.4}: 108 tuples
    pair = worked_pair(ResourceGrid(0.01, 1.0, delta_p=10.0, delta_theta=0.1))
    assert list(pair.grid.powers) == pytest.approx([0.01, 0.1, 1.0])
    assert list(pair.grid.thetas) == pytest.approx([0.1, 0.2, 0.3, 0.4])
    with pytest.raises(Infeasible):
        # p_max = 1 W cannot carry Q_p = 1 on this pair
        baselines.exhaustive_optimal(pair)
    easier = pair.replace(qos=QosReq(0.3, 0.5))
    ref = brute_force(easier)
    for mode in ("naive", "reduced"):
        res = baselines.exhaustive_optimal(easier, mode)
        a = res.snapped
        assert (wsp(easier, a), a.theta, a.p_p, a.p_r, a.p_s) == pytest.approx(ref, rel=1e-12)


def test_exhaustive_modes_agree():
    rng = np.random.default_rng(4)
    grid = ResourceGrid(0.01, 10.0, delta_p=3.0, delta_theta=0.04)
    done = 0
    while done < 100:
        pair = random_pair(rng, grid)
        try:
            naive = baselines.exhaustive_optimal(pair, "naive")
        except Infeasible:
            with pytest.raises(Infeasible):
                baselines.exhaustive_optimal(pair, "reduced")
            continue
        reduced = baselines.exhaustive_optimal(pair, "reduced")
        assert naive.snapped == reduced.snapped
        assert check_feasible(pair, naive.snapped).ok
        done += 1


def test_exhaustive_matches_scalar_brute_force():
    rng = np.random.default_rng(6)
    grid = ResourceGrid(0.01, 10.0, delta_p=5.0, delta_theta=0.05)
    for _ in range(15):
        pair = random_pair(rng, grid)
        ref = brute_force(pair)
        if ref is None:
            continue
        a = baselines.exhaustive_optimal(pair).snapped
        assert (wsp(pair, a), a.theta, a.p_p, a.p_r, a.p_s) == pytest.approx(ref, rel=1e-12)


def test_exhaustive_bad_mode():
    with pytest.raises(InvalidInput):
        baselines.exhaustive_optimal(worked_pair(), "clever")


def test_exhaustive_infeasible():
    pair = worked_pair().replace(qos=QosReq(40.0, 1.0))
    with pytest.raises(Infeasible):
        baselines.exhaustive_optimal(pair)


def test_exhaustive_bounds_other_schemes():
    rng = np.random.default_rng(9)
    # coarse power levels so that grid rounding opens visible gaps
    grid = ResourceGrid(0.01, 10.0, delta_p=4.2, delta_theta=0.02)
    gaps = 0
    for _ in range(40):
        pair = random_pair(rng, grid)
        try:
            ex = baselines.exhaustive_optimal(pair)
        except Infeasible:
            continue
        prop = newton.allocate(pair)
        kkt = baselines.kkt_alloc(pair)
        assert ex.wsp <= prop.wsp * (1 + 1e-12)
        assert ex.wsp <= kkt.wsp * (1 + 1e-12)
        gaps += kkt.wsp > ex.wsp * (1 + 1e-9)
    assert gaps > 0


def test_random_alloc_determinism_and_membership(pair):
    a1, v1 = baselines.random_alloc(pair, 42)
    a2, v2 = baselines.random_alloc(pair, 42)
    assert a1 == a2 and v1 == v2
    assert a1.theta in pair.grid.thetas
    for p in (a1.p_p, a1.p_r, a1.p_s):
        assert p in pair.grid.powers
    streams = {baselines.random_alloc(pair, s)[0] for s in range(20)}
    assert len(streams) > 15


def test_random_alloc_uniform():
    pair = worked_pair(ResourceGrid(0.01, 10.0, delta_p=3.0, delta_theta=0.05))
    rng = np.random.default_rng(0)
    n = 100_000
    draws = [baselines.random_alloc(pair, rng)[0] for _ in range(n)]
    for values, levels in (
        ([d.theta for d in draws], pair.grid.thetas),
        ([d.p_p for d in draws], pair.grid.powers),
        ([d.p_s for d in draws], pair.grid.powers),
    ):
        idx = np.searchsorted(levels, values)
        counts = np.bincount(idx, minlength=len(levels))
        assert chisquare(counts).pvalue > 0.01


def test_kkt_worked_pair(pair):
    report = baselines.kkt_candidates(pair)
    assert report.patterns_total == 512
    assert report.patterns_examined == 128
    assert report.candidates
    res = baselines.kkt_alloc(pair)
    theta_star, _ = newton.newton_solve(pair)
    assert res.continuous.theta == pytest.approx(theta_star, abs=1e-8)
    assert check_feasible(pair, res.snapped).ok


def test_kkt_candidates_are_kkt_points():
    rng = np.random.default_rng(13)
    for _ in range(25):
        pair = random_pair(rng)
        for c in baselines.kkt_candidates(pair).candidates:
            assert c.residual <= 1e-6
            assert c.multipliers_valid
            assert check_feasible(pair, c.allocation).ok
            assert all(c.multipliers[i] == 0.0 for i in range(baselines.L) if not c.active >> i & 1)


def test_kkt_infeasible():
    with pytest.raises(Infeasible):
        baselines.kkt_alloc(worked_pair().replace(qos=QosReq(40.0, 1.0)))


def test_ee_max_matches_enumeration():
    rng = np.random.default_rng(10)
    grid = ResourceGrid(0.01, 10.0, delta_p=5.0, delta_theta=0.05)
    for _ in range(10):
        pair = random_pair(rng, grid, equal_weights=True)
        try:
            ref = baselines.ee_max_naive(pair)
        except Infeasible:
            with pytest.raises(Infeasible):
                baselines.ee_max_exhaustive(pair)
            continue
        res = baselines.ee_max_exhaustive(pair)
        assert res.snapped_metrics.ee == pytest.approx(metrics(pair, ref).ee, rel=1e-9)
        assert check_feasible(pair, res.snapped).ok
