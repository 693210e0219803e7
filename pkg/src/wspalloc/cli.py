"""Command-line front end.

Usage: ``wspalloc {solve,sweep,warmstart,bench,match} [--config PATH] [options]``

The config file is flat ``key = value`` text; ``#`` starts a comment.  Numbers
may carry a unit suffix; a bare number is read in the canonical unit.

======================  ===================================  ================
key                     meaning                              units
======================  ===================================  ================
pt, pr, st, sr          node position ``x,y``                m (default), km
gamma, d0               path-loss exponent, reference dist   -, m/km
k_intercept             path gain at d0                      linear, dB
noise_dbm_hz            noise density                        dBm/Hz
bandwidth               noise bandwidth                      Hz, kHz, MHz
lambda_pp .. lambda_ss  normalized gains (skip geometry)     1/W, dB
w_pt, w_sr, w_st        power weights                        -
q_p, q_s                QoS targets                          bps/Hz
p_min, p_max            power box                            W, mW, dBm
delta_p, delta_theta    grid steps                           dB, -
epsilon, max_iter       Newton tolerance and iteration cap   -
theta0_strategy         midpoint, convergence_scan, ...      -
case5_edge_formula      corner-C derivative from CD edge     true/false
seed, runs, radius      Monte Carlo seed, drops, disk        -, -, m/km
qp_values, schemes      sweep q_p list and scheme list       comma lists
subframes, distances    drift length and PT-SR distances     -, m/km list
sigma_db, rho           drift std-dev and correlation        dB, -
strategies              theta0 strategies compared           comma list
drift_epsilon           Newton tolerance in the drift study  -
bench_distances         timed PT-SR distances                m/km list
repeats, warmup         timing repetitions                   -
exhaustive_mode         naive or reduced                     -
primaries, secondaries  links ``x1,y1,x2,y2; ...``           m/km
match_m, match_n        random link counts when not listed   -
======================  ===================================  ================

Exit codes: 0 success, 2 infeasible single solve, 3 configuration error,
4 internal solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import re
import sys
from dataclasses import dataclass, field

import numpy as np

from . import matching, newton, sim
from .errors import (
    Infeasible,
    InternalInconsistency,
    InvalidInput,
    InvalidScenario,
    Unconverged,
    WspError,
)
from .model import ChannelGains, LinkPair, QosReq, ResourceGrid, Weights, dbm_to_watt

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_CONFIG = 3
EXIT_SOLVER = 4


class ConfigError(InvalidInput):
    pass


_NUMBER = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z/]*)\s*$")

_UNITS = {
    "float": {"": lambda x: x},
    "int": {"": lambda x: x},
    "power": {"": lambda x: x, "W": lambda x: x, "mW": lambda x: x * 1e-3, "dBm": dbm_to_watt},
    "length": {"": lambda x: x, "m": lambda x: x, "km": lambda x: x * 1e3},
    "freq": {"": lambda x: x, "Hz": lambda x: x, "kHz": lambda x: x * 1e3, "MHz": lambda x: x * 1e6},
    "gain": {"": lambda x: x, "dB": lambda x: 10.0 ** (x / 10.0)},
    "db": {"": lambda x: x, "dB": lambda x: x},
    "dbm_hz": {"": lambda x: x, "dBm/Hz": lambda x: x},
}

# key -> (kind, shape); shape is "one", "list", "point" or "links"
KEYS = {
    "pt": ("length", "point"), "pr": ("length", "point"),
    "st": ("length", "point"), "sr": ("length", "point"),
    "gamma": ("float", "one"), "d0": ("length", "one"),
    "k_intercept": ("gain", "one"), "noise_dbm_hz": ("dbm_hz", "one"),
    "bandwidth": ("freq", "one"),
    "lambda_pp": ("gain", "one"), "lambda_ps": ("gain", "one"),
    "lambda_sp": ("gain", "one"), "lambda_ss": ("gain", "one"),
    "w_pt": ("float", "one"), "w_sr": ("float", "one"), "w_st": ("float", "one"),
    "q_p": ("float", "one"), "q_s": ("float", "one"),
    "p_min": ("power", "one"), "p_max": ("power", "one"),
    "delta_p": ("db", "one"), "delta_theta": ("float", "one"),
    "epsilon": ("float", "one"), "max_iter": ("int", "one"),
    "theta0_strategy": ("str", "one"), "case5_edge_formula": ("bool", "one"),
    "seed": ("int", "one"), "runs": ("int", "one"), "radius": ("length", "one"),
    "qp_values": ("float", "list"), "schemes": ("str", "list"),
    "subframes": ("int", "one"), "distances": ("length", "list"),
    "sigma_db": ("db", "one"), "rho": ("float", "one"),
    "strategies": ("str", "list"), "drift_epsilon": ("float", "one"),
    "bench_distances": ("length", "list"), "repeats": ("int", "one"),
    "warmup": ("int", "one"), "exhaustive_mode": ("str", "one"),
    "primaries": ("length", "links"), "secondaries": ("length", "links"),
    "match_m": ("int", "one"), "match_n": ("int", "one"),
}

_GAIN_KEYS = ("lambda_pp", "lambda_ps", "lambda_sp", "lambda_ss")


def _scalar(key, kind, text, default_unit=""):
    if kind == "str":
        if not text.strip():
            raise ConfigError(f"{key}: empty value")
        return text.strip()
    if kind == "bool":
        t = text.strip().lower()
        if t in ("1", "true", "yes", "on"):
            return True
        if t in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: not a boolean: {text!r}")
    m = _NUMBER.match(text)
    if not m:
        raise ConfigError(f"{key}: cannot parse {text!r}")
    number, unit = m.group(1), m.group(2) or default_unit
    convert = _UNITS[kind].get(unit)
    if convert is None:
        raise ConfigError(f"{key}: unit {unit!r} not allowed here")
    if kind == "int":
        try:
            return int(number)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {text!r}") from None
    value = convert(float(number))
    if not math.isfinite(value):
        raise ConfigError(f"{key}: non-finite value")
    return value


def _items(key, kind, text):
    parts = text.split(",")
    if any(not p.strip() for p in parts):
        raise ConfigError(f"{key}: empty list item in {text!r}")
    # a unit on the last item applies to bare items before it
    unit = ""
    if kind not in ("str", "bool"):
        m = _NUMBER.match(parts[-1])
        unit = m.group(2) if m else ""
    return [_scalar(key, kind, p, unit) for p in parts]


def parse_value(key: str, text: str):
    """Parse one config value according to the key's kind and shape."""
    if key not in KEYS:
        raise ConfigError(f"unknown key {key!r}")
    kind, shape = KEYS[key]
    if shape == "one":
        return _scalar(key, kind, text)
    if shape == "list":
        return tuple(_items(key, kind, text))
    if shape == "point":
        xy = _items(key, kind, text)
        if len(xy) != 2:
            raise ConfigError(f"{key}: expected 'x,y'")
        return tuple(xy)
    links = []
    for group in text.split(";"):
        v = _items(key, kind, group)
        if len(v) != 4:
            raise ConfigError(f"{key}: each link needs 'x1,y1,x2,y2'")
        links.append(((v[0], v[1]), (v[2], v[3])))
    return tuple(links)


def parse_config(text: str) -> dict:
    values = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        values[key] = parse_value(key, value)
    return values


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.values.get(key, default)

    def _pick(self, keys: dict) -> dict:
        return {attr: self.values[k] for k, attr in keys.items() if k in self.values}

    def grid(self) -> ResourceGrid:
        g = sim.default_grid()
        return ResourceGrid(
            self.get("p_min", g.p_min), self.get("p_max", g.p_max),
            self.get("delta_p", g.delta_p), self.get("delta_theta", g.delta_theta),
        )

    def weights(self) -> Weights:
        return Weights(**self._pick({"w_pt": "w_pt", "w_sr": "w_sr", "w_st": "w_st"}))

    def qos(self) -> QosReq:
        return QosReq(self.get("q_p", 3.0), self.get("q_s", 3.0))

    def scenario(self) -> sim.Scenario:
        kw = self._pick({
            "pt": "pt", "pr": "pr", "st": "st", "sr": "sr", "gamma": "gamma", "d0": "d0",
            "k_intercept": "k_intercept", "noise_dbm_hz": "noise_dbm_hz",
            "bandwidth": "bandwidth_hz",
        })
        return sim.Scenario(weights=self.weights(), qos=self.qos(), grid=self.grid(), **kw)

    def pair(self) -> LinkPair:
        given = [k for k in _GAIN_KEYS if k in self.values]
        if given and len(given) != 4:
            raise ConfigError("give all four lambda_* keys or none")
        if given:
            gains = ChannelGains(*(self.values[k] for k in _GAIN_KEYS))
            return LinkPair(gains, self.weights(), self.qos(), self.grid())
        return sim.link_pair(self.scenario())

    def newton(self) -> newton.NewtonConfig:
        return newton.NewtonConfig(**self._pick({
            "epsilon": "epsilon", "max_iter": "max_iter",
            "theta0_strategy": "theta0_strategy", "case5_edge_formula": "case5_edge_formula",
        }))

    def monte_carlo(self) -> sim.MonteCarloConfig:
        kw = self._pick({"runs": "runs", "radius": "radius", "qp_values": "qp_values",
                         "q_s": "q_s", "seed": "seed", "schemes": "schemes"})
        return sim.MonteCarloConfig(**kw)

    def drift(self) -> sim.DriftConfig:
        kw = self._pick({"subframes": "subframes", "distances": "distances",
                         "sigma_db": "sigma_db", "rho": "rho", "strategies": "strategies",
                         "q_p": "q_p", "q_s": "q_s", "seed": "seed",
                         "drift_epsilon": "epsilon", "max_iter": "max_iter"})
        return sim.DriftConfig(**kw)

    def bench(self) -> sim.BenchConfig:
        kw = self._pick({"bench_distances": "distances", "repeats": "repeats",
                         "warmup": "warmup", "schemes": "schemes",
                         "exhaustive_mode": "exhaustive_mode", "q_p": "q_p", "q_s": "q_s"})
        return sim.BenchConfig(**kw)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, str)):
        return str(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".9g")


def write_csv(out, header, rows):
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(row.get(h)) for h in header])


SOLVE_COLUMNS = ("status", "theta_star", "wsp_continuous", "theta", "p_p", "p_r", "p_s",
                 "wsp", "s_p", "s_s", "ee", "case", "iterations")


def cmd_solve(cfg: RunConfig, out) -> int:
    pair = cfg.pair()
    try:
        res = newton.allocate(pair, cfg.newton())
    except Infeasible:
        write_csv(out, SOLVE_COLUMNS, [{"status": "infeasible"}])
        return EXIT_INFEASIBLE
    row = {
        "status": res.status,
        "theta_star": res.continuous.theta,
        "wsp_continuous": res.continuous_metrics.wsp,
        "case": res.case.value,
        "iterations": res.trace.iterations,
    }
    if res.snapped is None:
        row["status"] = "no_grid_point"
    else:
        a, m = res.snapped, res.snapped_metrics
        row.update(theta=a.theta, p_p=a.p_p, p_r=a.p_r, p_s=a.p_s,
                   wsp=m.wsp, s_p=m.s_p, s_s=m.s_s, ee=m.ee)
    write_csv(out, SOLVE_COLUMNS, [row])
    if res.status == "unconverged":
        return EXIT_SOLVER
    return EXIT_OK if res.snapped is not None else EXIT_INFEASIBLE


def cmd_sweep(cfg: RunConfig, out) -> int:
    report = sim.monte_carlo(cfg.monte_carlo(), cfg.scenario(), cfg.newton())
    rows = sorted(report.rows, key=lambda r: (r["qp"], r["scheme"]))
    write_csv(out, ("qp", "scheme", "mean_wsp", "mean_sp", "mean_ss", "mean_ee",
                    "feasible_rate"), rows)
    return EXIT_OK


def cmd_warmstart(cfg: RunConfig, out) -> int:
    report = sim.warmstart_experiment(cfg.drift(), cfg.scenario())
    rows = sorted(report.rows, key=lambda r: (r["distance_m"], r["strategy"]))
    write_csv(out, ("distance_m", "strategy", "median_iters", "p90_iters"), rows)
    return EXIT_OK


def cmd_bench(cfg: RunConfig, out) -> int:
    report = sim.bench(cfg.bench(), cfg.scenario())
    rows = sorted(report.rows, key=lambda r: (r["distance_m"], r["scheme"]))
    write_csv(out, ("distance_m", "scheme", "median_ms", "ratio_vs_proposed"), rows)
    return EXIT_OK


def cmd_match(cfg: RunConfig, out) -> int:
    radius = cfg.get("radius", 5000.0)
    rng = np.random.default_rng(cfg.get("seed", 0))
    primaries = cfg.get("primaries") or matching.random_links(rng, cfg.get("match_m", 4), radius)
    secondaries = cfg.get("secondaries") or matching.random_links(rng, cfg.get("match_n", 4), radius)
    costs = matching.pairwise_cost_matrix(primaries, secondaries, cfg.scenario(), cfg.newton())
    result = matching.kuhn_munkres(costs)
    rows = [{"primary_id": i, "secondary_id": j, "cost_w": c} for i, j, c in result.pairs]
    rows += [{"primary_id": i} for i in result.unmatched_rows]
    rows.sort(key=lambda r: r["primary_id"])
    rows += [{"secondary_id": j} for j in result.unmatched_cols]
    write_csv(out, ("primary_id", "secondary_id", "cost_w"), rows)
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "warmstart": cmd_warmstart,
    "bench": cmd_bench,
    "match": cmd_match,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH")
    common.add_argument("--seed", metavar="U64")
    common.add_argument("--out", metavar="PATH")
    common.add_argument("--grid-dp", metavar="DB")
    common.add_argument("--grid-dtheta", metavar="F")
    common.add_argument("--schemes", metavar="LIST")
    common.add_argument("--runs", metavar="N")
    parser = _Parser(prog="wspalloc", description="Weighted-sum-power allocation for relay-assisted spectrum sharing.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def load_config(args) -> RunConfig:
    values = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                values = parse_config(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    overrides = {"seed": args.seed, "delta_p": args.grid_dp, "delta_theta": args.grid_dtheta,
                 "schemes": args.schemes, "runs": args.runs}
    for key, text in overrides.items():
        if text is not None:
            values[key] = parse_value(key, text)
    if "seed" in values and values["seed"] < 0:
        raise ConfigError("seed must be >= 0")
    return RunConfig(values)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        buf = io.StringIO()
        code = COMMANDS[args.command](cfg, buf)
    except (InternalInconsistency, Unconverged) as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (InvalidInput, InvalidScenario) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except WspError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    text = buf.getvalue()
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
