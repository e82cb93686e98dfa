"""Command-line front end: ``gsgd <subcommand> [--config FILE] [--key value ...]``.

Every option is also a config-file key (``key = value``). Values given on
the command line override the file, which overrides the defaults below.
Exit status: 0 on success, 1 on a configuration error, 2 on a numerical
failure.
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import io
from .datasets import RATING_FORMATS, ingest_ratings
from .diagnostics import aligned_distance, graph_incoherence_mu, psi_smoothness, regularizer_values
from .errors import BadParameter, ConfigError, NumericalError
from .experiments import BENCH_HEADER, TOY_CASES, TOY_METHODS, BenchConfig, bench, make_problem, toy2d
from .factors import FactorPair
from .graphs import build_operator, identity_operator
from .initialization import PROJECTION_SCALINGS, ProjectionConfig
from .linalg import top_r_svd
from .observation import rmse_complement, rmse_on
from .solvers import METHODS, SolverConfig, SolverFailure, run
from .synthetic import GRAPH_KINDS, SynthConfig

logger = logging.getLogger("gsgd")

SUBCOMMANDS = ("synth", "run", "bench", "ingest", "eval", "toy2d")


def _floats(s):
    return tuple(float(t) for t in s.split(",") if t.strip())


def _ints(s):
    return tuple(int(t) for t in s.split(",") if t.strip())


def _strs(s):
    return tuple(t.strip() for t in s.split(",") if t.strip())


def _opt_float(s):
    return None if s.lower() in ("", "none") else float(s)


# key: (parser, default, help)
KEYS = {
    # instance
    "m": (int, 200, "rows of the synthetic matrix"),
    "n": (int, 200, "columns of the synthetic matrix"),
    "r": (int, 5, "rank"),
    "graph_kind": (str, "knn_uniform_points", f"synthetic graph family {GRAPH_KINDS}"),
    "k": (int, 10, "neighbours for k-NN graphs"),
    "communities": (int, 2, "community graph: number of blocks"),
    "intra": (float, 0.5, "community graph: within-block edge probability"),
    "inter": (float, 0.01, "community graph: between-block edge probability"),
    "filter_scale": (float, 1.0, "Tikhonov filter strength"),
    "seed": (int, 0, "master seed"),
    "p": (float, 0.2, "sampling probability"),
    "sigma": (float, 0.0, "noise standard deviation"),
    "false_edges": (float, 0.0, "proportion of graph edges replaced by random non-edges"),
    # solver
    "method": (str, "gsgd", f"solver {METHODS}"),
    "eta": (_opt_float, None, "step size (default: per-method)"),
    "beta": (float, 1.0, "graph weight beta"),
    "lambda": (float, 1.0, "operator parameter lambda"),
    "max_iters": (int, 500, "iteration cap"),
    "target_rmse": (_opt_float, None, "stop once the test RMSE reaches this value"),
    "rel_change_tol": (float, 1e-6, "plateau tolerance on the relative train-RMSE change"),
    "init": (str, "graph", "initialisation: graph or standard"),
    "projection": (str, "none", "projection radius: none, auto or a positive number"),
    "c_B": (float, 1.5, "constant in the automatic projection radius"),
    "projection_scaling": (str, "exact", f"projection weighting {PROJECTION_SCALINGS}"),
    # bench
    "methods": (_strs, ("gd", "scaledgd", "glgd", "gsgd"), "comma-separated methods"),
    "ps": (_floats, (0.2,), "comma-separated sampling probabilities"),
    "sigmas": (_floats, (0.0,), "comma-separated noise levels"),
    "seeds": (_ints, (0,), "comma-separated seeds"),
    "eta_factors": (_floats, (0.1, 0.25, 0.5, 0.75, 1.0), "step-size grid as multiples of the default"),
    "betas": (_floats, (0.5, 1.0, 2.0), "beta grid"),
    "lambdas": (_floats, (0.1, 1.0, 10.0), "lambda grid"),
    "bench_max_iters": (int, 200, "iteration cap inside bench"),
    "workers": (int, 1, "parallel bench cells"),
    # files
    "out": (str, "out", "output directory"),
    "truth": (str, "", "truth matrix CSV"),
    "observations": (str, "", "observation file"),
    "test_observations": (str, "", "held-out observation file"),
    "row_graph": (str, "", "row graph file"),
    "col_graph": (str, "", "column graph file"),
    "factor_w": (str, "", "W factor CSV (eval)"),
    "factor_h": (str, "", "H factor CSV (eval)"),
    # ingest
    "ratings": (str, "", "ratings file"),
    "format": (str, "double_colon", f"ratings format {RATING_FORMATS}"),
    "holdout_fraction": (float, 0.0, "fraction of ratings withheld as test set"),
    "user_features": (str, "", "user feature CSV"),
    "item_features": (str, "", "item feature CSV"),
    # toy
    "case": (str, "false_edge", f"toy case {tuple(TOY_CASES)}"),
    "iters": (int, 100, "toy iterations"),
    "timing": (str, "true", "write wall-clock columns (false writes zeros)"),
}


def _parse_value(key, raw):
    parser = KEYS[key][0]
    try:
        return parser(raw)
    except ValueError:
        raise BadParameter(f"bad value for {key}: {raw!r}") from None


def load_settings(config_path=None, overrides=None):
    """Defaults, then the config file, then explicit overrides (raw strings)."""
    settings = {k: v[1] for k, v in KEYS.items()}
    if config_path:
        if not os.path.exists(config_path):
            raise BadParameter(f"config file not found: {config_path}")
        for key, raw in io.read_config(config_path).items():
            if key not in KEYS:
                raise BadParameter(f"unknown config key {key!r}")
            settings[key] = _parse_value(key, raw)
    for key, raw in (overrides or {}).items():
        settings[key] = _parse_value(key, raw)
    return settings


def _synth_config(s):
    params = {"k": s["k"]} if s["graph_kind"] == "knn_uniform_points" else {
        "communities": s["communities"], "intra": s["intra"], "inter": s["inter"]}
    return SynthConfig(m=s["m"], n=s["n"], r=s["r"], graph_kind=s["graph_kind"], graph_params=params,
                       filter_scale=s["filter_scale"], seed=s["seed"])


def _projection(s):
    v = s["projection"].strip().lower()
    if v in ("", "none", "off"):
        radius = None
    elif v == "auto":
        radius = "auto"
    else:
        try:
            radius = float(v)
        except ValueError:
            raise BadParameter(f"projection must be none, auto or a number, got {v!r}") from None
    return ProjectionConfig(radius=radius, c_B=s["c_B"], scaling=s["projection_scaling"])


def _solver_config(s):
    return SolverConfig(method=s["method"], eta=s["eta"], beta=s["beta"], lam=s["lambda"],
                        max_iters=s["max_iters"], target_rmse=s["target_rmse"],
                        rel_change_tol=s["rel_change_tol"], projection=_projection(s),
                        init=s["init"], seed=s["seed"])


def _flag(s, key):
    return s[key].strip().lower() in ("1", "true", "yes", "on")


def _require(path, key):
    if not path:
        raise BadParameter(f"missing required setting {key!r}")
    if not os.path.exists(path):
        raise BadParameter(f"{key} file not found: {path}")
    return path


def _out(s, name):
    return os.path.join(s["out"], name)


# subcommands ------------------------------------------------------------

def cmd_synth(s):
    problem = make_problem(_synth_config(s), s["p"], s["sigma"], s["false_edges"])
    io.write_matrix(_out(s, "truth.csv"), problem.truth)
    io.write_observations(_out(s, "observations.txt"), problem.obs)
    io.write_graph(_out(s, "row_graph.txt"), problem.graphs[0])
    io.write_graph(_out(s, "col_graph.txt"), problem.graphs[1])
    if s["false_edges"] > 0:
        io.write_graph(_out(s, "clean_row_graph.txt"), problem.instance.G1)
        io.write_graph(_out(s, "clean_col_graph.txt"), problem.instance.G2)
    return 0


def _load_run_inputs(s):
    """Problem from files when ``observations`` is set, otherwise synthesised."""
    if s["observations"]:
        obs = io.read_observations(_require(s["observations"], "observations"))
        graphs = None
        if s["row_graph"] or s["col_graph"]:
            graphs = (io.read_graph(_require(s["row_graph"], "row_graph")),
                      io.read_graph(_require(s["col_graph"], "col_graph")))
        if s["truth"]:
            truth = io.read_matrix(_require(s["truth"], "truth"))
        elif s["test_observations"]:
            truth = io.read_observations(_require(s["test_observations"], "test_observations"))
        else:
            truth = None
        return obs, graphs, truth
    problem = make_problem(_synth_config(s), s["p"], s["sigma"], s["false_edges"])
    return problem.obs, problem.graphs, problem.truth


def cmd_run(s):
    cfg = _solver_config(s)
    obs, graphs, truth = _load_run_inputs(s)
    timing = _flag(s, "timing")
    try:
        trace = run(cfg, obs, s["r"], graphs=graphs, truth=truth)
    except SolverFailure as exc:
        io.write_trace(_out(s, "trace.csv"), exc.trace, timing)
        raise exc.cause
    io.write_trace(_out(s, "trace.csv"), trace, timing)
    io.write_matrix(_out(s, "W.csv"), trace.factors.W)
    io.write_matrix(_out(s, "H.csv"), trace.factors.H)
    return 0


def cmd_bench(s):
    bc = BenchConfig(methods=s["methods"], ps=s["ps"], sigmas=s["sigmas"], synth=_synth_config(s),
                     seeds=s["seeds"], false_edges=s["false_edges"], max_iters=s["bench_max_iters"],
                     eta_factors=s["eta_factors"], betas=s["betas"], lambdas=s["lambdas"],
                     init=s["init"], workers=s["workers"])
    rows = bench(bc)
    if not _flag(s, "timing"):
        rows = [row[:-1] + (0.0,) for row in rows]
    io.write_table(_out(s, "bench.csv"), BENCH_HEADER, rows)
    return 0


def cmd_ingest(s):
    ds = ingest_ratings(_require(s["ratings"], "ratings"), s["format"], s["holdout_fraction"], s["seed"],
                        user_features=s["user_features"] or None, item_features=s["item_features"] or None,
                        user_graph=s["row_graph"] or None, item_graph=s["col_graph"] or None, k=s["k"])
    io.write_observations(_out(s, "observations.txt"), ds.train)
    if ds.test is not None:
        io.write_observations(_out(s, "test_observations.txt"), ds.test)
    if ds.user_graph is not None:
        io.write_graph(_out(s, "row_graph.txt"), ds.user_graph)
    if ds.item_graph is not None:
        io.write_graph(_out(s, "col_graph.txt"), ds.item_graph)
    io.write_table(_out(s, "user_ids.csv"), ("index", "raw_id"), list(enumerate(ds.user_ids)))
    io.write_table(_out(s, "item_ids.csv"), ("index", "raw_id"), list(enumerate(ds.item_ids)))
    return 0


def cmd_eval(s):
    """Diagnostics of a truth matrix and, if factors are given, of an estimate."""
    if s["truth"]:
        X = io.read_matrix(_require(s["truth"], "truth"))
        G1 = io.read_graph(_require(s["row_graph"], "row_graph"))
        G2 = io.read_graph(_require(s["col_graph"], "col_graph"))
        obs = io.read_observations(s["observations"]) if s["observations"] else None
    else:
        problem = make_problem(_synth_config(s), s["p"], s["sigma"], s["false_edges"])
        X, (G1, G2), obs = problem.truth, problem.graphs, problem.obs
    r, beta = s["r"], s["beta"]
    opW, opH = build_operator(G1, beta, s["lambda"]), build_operator(G2, beta, s["lambda"])
    psi = psi_smoothness(X, opW, opH, r=r)
    items = [("spectral_norm_ratio", psi.ratio), ("psi", psi.psi),
             ("graph_incoherence_mu", graph_incoherence_mu(X, r, opW, opH)),
             ("standard_incoherence_mu", graph_incoherence_mu(X, r, identity_operator(X.shape[0]),
                                                              identity_operator(X.shape[1])))]
    if s["factor_w"] or s["factor_h"]:
        F = FactorPair(io.read_matrix(_require(s["factor_w"], "factor_w")),
                       io.read_matrix(_require(s["factor_h"], "factor_h")))
        svd = top_r_svd(X, F.r)
        root = np.sqrt(svd.S)
        F_star = FactorPair(svd.U * root, svd.V * root)
        al = aligned_distance(F, F_star, opW, opH, svd.S)
        items += [("aligned_distance", al.dist), ("alignment_foc_residual", al.foc_residual),
                  ("alignment_converged", float(al.converged))]
        if obs is not None:
            lap, higher = regularizer_values(F, obs, opW, opH, G1.laplacian, G2.laplacian, beta)
            items += [("laplacian_regularizer", lap), ("higher_order_regularizer", higher),
                      ("train_rmse", rmse_on(obs, F)), ("complement_rmse", rmse_complement(X, obs, F))]
    io.write_report(_out(s, "diagnostics.csv"), items)
    return 0


def cmd_toy2d(s):
    res = toy2d(s["case"], iters=s["iters"], seed=s["seed"], beta=s["beta"], lam=s["lambda"])
    rows = []
    for method in TOY_METHODS:
        for t, (w1, w2, e) in enumerate(res.traces[method], start=1):
            rows.append((method, t, float(w1), float(w2), float(e)))
    io.write_table(_out(s, f"toy2d_{s['case']}.csv"), ("method", "iter", "W1", "W2", "rmse"), rows)
    return 0


COMMANDS = {"synth": cmd_synth, "run": cmd_run, "bench": cmd_bench, "ingest": cmd_ingest,
            "eval": cmd_eval, "toy2d": cmd_toy2d}


def build_parser():
    parser = argparse.ArgumentParser(prog="gsgd", description="Graph-regularised matrix completion toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, help=(COMMANDS[name].__doc__ or name).split("\n")[0])
        sp.add_argument("--config", help="key = value settings file")
        sp.add_argument("-v", "--verbose", action="store_true")
        for key, (_, default, help_) in KEYS.items():
            flag = "--" + key
            aliases = [flag] if "_" not in key else [flag, "--" + key.replace("_", "-")]
            sp.add_argument(*aliases, dest=key, default=None, metavar="V",
                            help=f"{help_} (default: {default})")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k in KEYS and v is not None}
    try:
        settings = load_settings(args.config, overrides)
        return COMMANDS[args.command](settings)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"gsgd {args.command}: configuration error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"gsgd {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
