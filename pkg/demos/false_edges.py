"""What happens when the similarity graphs contain wrong edges.

First the two-row toy problem, where a single edge links rows that do not
agree, then a synthetic problem with 20% of edges replaced by random ones.
"""

from gsgd.experiments import false_edge_ratio, make_problem, solve, toy2d
from gsgd.solvers import SolverConfig
from gsgd.synthetic import SynthConfig

for case in ("real_edge", "false_edge"):
    res = toy2d(case, iters=100)
    summary = ", ".join(f"{m} {res.final_rmse(m):.1e}" for m in res.traces)
    print(f"toy {case:>10} target {tuple(float(v) for v in res.x)}: {summary}")

# A Laplacian penalty pulls the two rows together and leaves a bias; the
# graph-scaled step only uses the graph to precondition, so it still fits.

cfg = SynthConfig(m=400, n=400, r=5, seed=1)
for fe in (0.0, 0.2):
    print(f"false edges {fe:.0%}: smoothness ratio {false_edge_ratio(cfg, fe):.3f}")
    problem = make_problem(cfg, p=0.2, sigma=0.1, false_edges=fe)
    for method in ("gsgd", "glgd"):
        tr = solve(problem, SolverConfig(method=method, max_iters=400))
        status = "diverged" if tr.reason == "error" else f"rmse {tr.final_test_rmse:.4f}"
        print(f"   {method}: {status}")
