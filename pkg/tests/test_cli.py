import csv
import io
import subprocess
import sys

import numpy as np
import pytest

from conftest import worked_pair
from wspalloc import cli, matching, newton, sim
from wspalloc.model import QosReq, ResourceGrid, dbm_to_watt

WORKED = """\
# worked pair, gains given directly
lambda_pp = 1
lambda_ps = 2
lambda_sp = 1
lambda_ss = 15
q_p = 1
q_s = 1
p_min = 10 mW
p_max = 10 W
"""

FAST = "p_min = -40 dBm\np_max = 23 dBm\ndelta_p = 3\ndelta_theta = 0.02\n"


def run_cli(tmp_path, argv, config=None, name="run.cfg"):
    args = list(argv)
    if config is not None:
        path = tmp_path / name
        path.write_text(config)
        args += ["--config", str(path)]
    out = tmp_path / "out.csv"
    code = cli.run(args + ["--out", str(out)])
    return code, out.read_bytes() if out.exists() else b""


def rows_of(data: bytes):
    return list(csv.DictReader(io.StringIO(data.decode())))


def test_parse_value_units():
    assert cli.parse_value("p_max", "23 dBm") == pytest.approx(dbm_to_watt(23.0))
    assert cli.parse_value("p_max", "200mW") == pytest.approx(0.2)
    assert cli.parse_value("radius", "5 km") == 5000.0
    assert cli.parse_value("bandwidth", "180 kHz") == 180e3
    assert cli.parse_value("lambda_ss", "10 dB") == pytest.approx(10.0)
    assert cli.parse_value("distances", "5,10,15 km") == (5000.0, 10000.0, 15000.0)
    assert cli.parse_value("pt", "-5,0 km") == (-5000.0, 0.0)
    assert cli.parse_value("case5_edge_formula", "yes") is True
    links = cli.parse_value("primaries", "0,0,1,0; 2,2,3,3")
    assert links == (((0.0, 0.0), (1.0, 0.0)), ((2.0, 2.0), (3.0, 3.0)))


@pytest.mark.parametrize("key, text", [
    ("p_max", "23 furlongs"), ("radius", "5 dBm"), ("runs", "2.5"), ("q_p", "abc"),
    ("qp_values", "1,,2"), ("pt", "1,2,3"), ("case5_edge_formula", "maybe"), ("nonsense", "1"),
])
def test_parse_value_rejects(key, text):
    with pytest.raises(cli.ConfigError):
        cli.parse_value(key, text)


def test_parse_config_rejects_duplicates_and_garbage():
    with pytest.raises(cli.ConfigError):
        cli.parse_config("q_p = 1\nq_p = 2\n")
    with pytest.raises(cli.ConfigError):
        cli.parse_config("q_p 1\n")
    assert cli.parse_config("# only a comment\n\nq_p = 2 # trailing\n") == {"q_p": 2.0}


def test_solve_matches_library_byte_for_byte(tmp_path):
    code, data = run_cli(tmp_path, ["solve"], WORKED)
    assert code == cli.EXIT_OK
    res = newton.allocate(worked_pair(ResourceGrid(0.01, 10.0, delta_p=1.0, delta_theta=0.005)))
    a, m = res.snapped, res.snapped_metrics
    expected = io.StringIO()
    cli.write_csv(expected, cli.SOLVE_COLUMNS, [{
        "status": "ok", "theta_star": res.continuous.theta,
        "wsp_continuous": res.continuous_metrics.wsp, "theta": a.theta, "p_p": a.p_p,
        "p_r": a.p_r, "p_s": a.p_s, "wsp": m.wsp, "s_p": m.s_p, "s_s": m.s_s, "ee": m.ee,
        "case": res.case.value, "iterations": res.trace.iterations,
    }])
    assert data.decode() == expected.getvalue()
    row = rows_of(data)[0]
    assert float(row["theta_star"]) == pytest.approx(0.3859009164, abs=1e-9)
    assert float(row["wsp"]) == pytest.approx(m.wsp, rel=1e-8)


def test_solve_infeasible_exit_2(tmp_path):
    code, data = run_cli(tmp_path, ["solve"], WORKED.replace("q_p = 1", "q_p = 60"))
    assert code == cli.EXIT_INFEASIBLE
    rows = rows_of(data)
    assert rows == [{k: ("infeasible" if k == "status" else "") for k in cli.SOLVE_COLUMNS}]


def test_solve_geometry_config(tmp_path):
    cfg = "pt = -5,0 km\npr = 5,0 km\nst = 0,2500\nsr = 0,-2500\nq_p = 2\nq_s = 3\n"
    code, data = run_cli(tmp_path, ["solve"], cfg)
    assert code == cli.EXIT_OK
    pair = sim.link_pair(sim.Scenario(qos=QosReq(2.0, 3.0)))
    assert float(rows_of(data)[0]["wsp"]) == pytest.approx(newton.allocate(pair).wsp, rel=1e-8)


@pytest.mark.parametrize("config", [
    "colour = blue\n",
    "p_max = 3 parsecs\n",
    "lambda_pp = 1\nlambda_ps = 2\n",
    "q_p = -1\n",
    "delta_theta = 0.4\n",
    "theta0_strategy = golden\n",
])
def test_config_errors_exit_3(tmp_path, config):
    code, data = run_cli(tmp_path, ["solve"], config)
    assert code == cli.EXIT_CONFIG
    assert data == b""


def test_argparse_errors_exit_3(capsys):
    with pytest.raises(SystemExit) as info:
        cli.run(["frobnicate"])
    assert info.value.code == cli.EXIT_CONFIG
    with pytest.raises(SystemExit) as info:
        cli.run(["solve", "--bogus"])
    assert info.value.code == cli.EXIT_CONFIG


def test_missing_config_file_exit_3(tmp_path):
    assert cli.run(["solve", "--config", str(tmp_path / "absent.cfg")]) == cli.EXIT_CONFIG


def test_unconverged_exit_4(tmp_path):
    code, data = run_cli(tmp_path, ["solve"], WORKED + "epsilon = 1e-300\nmax_iter = 1\n")
    assert code == cli.EXIT_SOLVER
    assert rows_of(data)[0]["status"] == "unconverged"


def test_sweep_deterministic_and_sorted(tmp_path):
    argv = ["sweep", "--runs", "4", "--seed", "7", "--schemes", "proposed,kkt,random"]
    code1, first = run_cli(tmp_path, argv, FAST)
    code2, second = run_cli(tmp_path, argv, FAST)
    assert code1 == code2 == cli.EXIT_OK
    assert first == second
    assert first.decode().splitlines()[0] == "qp,scheme,mean_wsp,mean_sp,mean_ss,mean_ee,feasible_rate"
    rows = rows_of(first)
    keys = [(float(r["qp"]), r["scheme"]) for r in rows]
    assert keys == sorted(keys) and len(rows) == 15
    _, other = run_cli(tmp_path, ["sweep", "--runs", "4", "--seed", "8",
                                  "--schemes", "proposed,kkt,random"], FAST)
    assert other != first


def test_sweep_rows_rederivable(tmp_path):
    code, data = run_cli(tmp_path, ["sweep", "--runs", "3", "--seed", "2", "--schemes", "proposed"],
                         FAST + "qp_values = 1,2\n")
    assert code == cli.EXIT_OK
    cfg = cli.RunConfig(cli.parse_config(FAST))
    report = sim.monte_carlo(sim.MonteCarloConfig(runs=3, seed=2, qp_values=(1.0, 2.0),
                                                  schemes=("proposed",)), cfg.scenario())
    for got, want in zip(rows_of(data), report.rows):
        assert float(got["mean_wsp"]) == pytest.approx(want["mean_wsp"], rel=1e-8)
        assert float(got["feasible_rate"]) == want["feasible_rate"]


def test_warmstart_deterministic(tmp_path):
    cfg = FAST + "subframes = 6\ndistances = 6,12 km\n"
    code, first = run_cli(tmp_path, ["warmstart", "--seed", "3"], cfg)
    _, second = run_cli(tmp_path, ["warmstart", "--seed", "3"], cfg)
    assert code == cli.EXIT_OK and first == second
    rows = rows_of(first)
    assert list(rows[0]) == ["distance_m", "strategy", "median_iters", "p90_iters"]
    keys = [(float(r["distance_m"]), r["strategy"]) for r in rows]
    assert keys == sorted(keys) and len(rows) == 6


def test_match_deterministic_and_rederivable(tmp_path):
    cfg = FAST + "match_m = 3\nmatch_n = 4\n"
    code, first = run_cli(tmp_path, ["match", "--seed", "11"], cfg)
    _, second = run_cli(tmp_path, ["match", "--seed", "11"], cfg)
    assert code == cli.EXIT_OK and first == second
    rows = rows_of(first)
    matched = [r for r in rows if r["primary_id"] and r["secondary_id"]]
    assert len(matched) <= 3
    assert [int(r["primary_id"]) for r in rows if r["primary_id"]] == [0, 1, 2]
    run = cli.RunConfig(cli.parse_config(cfg))
    rng = np.random.default_rng(11)
    prim = matching.random_links(rng, 3, 5000.0)
    sec = matching.random_links(rng, 4, 5000.0)
    res = matching.kuhn_munkres(matching.pairwise_cost_matrix(prim, sec, run.scenario()))
    assert {int(r["primary_id"]): int(r["secondary_id"]) for r in matched} == res.as_dict()


def test_match_explicit_links(tmp_path):
    cfg = FAST + "primaries = -2000,0,2000,0\nsecondaries = 0,1500,0,-500; 0,400000,0,300000\n"
    code, data = run_cli(tmp_path, ["match"], cfg)
    assert code == cli.EXIT_OK
    assert data.decode() == "primary_id,secondary_id,cost_w\n" + \
        f"0,0,{float(rows_of(data)[0]['cost_w']):.9g}\n,1,\n"


def test_bench_columns(tmp_path):
    cfg = FAST + "bench_distances = 8 km\nrepeats = 1\nwarmup = 0\nexhaustive_mode = reduced\n"
    code, data = run_cli(tmp_path, ["bench"], cfg)
    assert code == cli.EXIT_OK
    rows = rows_of(data)
    assert [r["scheme"] for r in rows] == ["exhaustive", "kkt", "proposed"]
    assert float(rows[2]["ratio_vs_proposed"]) == 1.0


def test_stdout_and_module_entry(tmp_path):
    path = tmp_path / "w.cfg"
    path.write_text(WORKED)
    proc = subprocess.run([sys.executable, "-m", "wspalloc", "solve", "--config", str(path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    code, data = run_cli(tmp_path, ["solve"], WORKED)
    assert proc.stdout == data.decode()
