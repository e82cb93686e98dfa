"""From a ratings file to a completed matrix and a diagnostics report.

Writes a small MovieLens-style file with a hidden low-rank structure,
ingests it with a 10% holdout, builds user/item graphs from feature
vectors and fits the model. Everything goes through the library calls the
command-line tool uses.
"""

import os
import tempfile

import numpy as np

from gsgd import io
from gsgd.datasets import ingest_ratings
from gsgd.solvers import SolverConfig, run

rng = np.random.default_rng(7)
n_users, n_items, r = 150, 120, 3
user_feat = rng.standard_normal((n_users, r))
item_feat = rng.standard_normal((n_items, r))
scores = user_feat @ item_feat.T

work = tempfile.mkdtemp()
ratings = os.path.join(work, "ratings.dat")
with open(ratings, "w") as fh:
    for u, i in zip(*np.nonzero(rng.random((n_users, n_items)) < 0.3)):
        fh.write(f"u{u}::m{i}::{scores[u, i]:.6f}::0\n")

# Raw ids become dense indices in order of first appearance, so the
# feature rows must be reordered the same way.
ds = ingest_ratings(ratings, holdout_fraction=0.1, seed=0)
uf = os.path.join(work, "users.csv")
mf = os.path.join(work, "items.csv")
io.write_matrix(uf, user_feat[[int(s[1:]) for s in ds.user_ids]])
io.write_matrix(mf, item_feat[[int(s[1:]) for s in ds.item_ids]])
ds = ingest_ratings(ratings, holdout_fraction=0.1, seed=0, user_features=uf, item_features=mf, k=8)
print(f"{ds.n_users} users, {ds.n_items} items, {ds.train.size} train / {ds.test.size} test ratings")

for method in ("scaledgd", "gsgd"):
    trace = run(SolverConfig(method=method, max_iters=200), ds.train, r,
                graphs=(ds.user_graph, ds.item_graph), truth=ds.test)
    print(f"{method:>9}: held-out rmse {trace.final_test_rmse:.2e} in {len(trace)} iterations")
