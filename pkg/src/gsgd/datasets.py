"""Ratings ingestion (MovieLens ``::`` files and CSV triplets) and feature graphs."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import BadParameter, DimensionMismatch, EmptyDataset, ParseError
from .graphs import SimilarityGraph, knn_graph
from .io import read_graph, read_matrix
from .observation import ObservationSet, split

RATING_FORMATS = ("double_colon", "csv_triplets")
FEATURE_GRAPH_K = 10


@dataclass
class RatingsDataset:
    """Ratings with dense 0-based ids.

    ``user_ids[k]`` / ``item_ids[k]`` hold the raw id of dense index ``k``.
    ``test`` is ``None`` when no holdout was requested.
    """

    train: ObservationSet
    test: Optional[ObservationSet]
    user_ids: list
    item_ids: list
    user_graph: Optional[SimilarityGraph] = None
    item_graph: Optional[SimilarityGraph] = None

    @property
    def n_users(self):
        return self.train.m

    @property
    def n_items(self):
        return self.train.n


def _split_line(line, fmt):
    if fmt == "double_colon":
        toks = line.split("::")
        return toks if len(toks) in (3, 4) else None
    toks = [t.strip() for t in line.split(",")]
    return toks if len(toks) in (3, 4) else None


def parse_ratings(lines, fmt, path=None):
    """Parse rating lines into ``(user_raw, item_raw, rating)`` with duplicates resolved.

    A header line in ``csv_triplets`` files is skipped when its rating field is
    not numeric. Later duplicates of a ``(user, item)`` pair replace the value
    of earlier ones but keep the position of the first occurrence.
    """
    if fmt not in RATING_FORMATS:
        raise BadParameter(f"unknown ratings format {fmt!r}; expected one of {RATING_FORMATS}")
    entries = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        toks = _split_line(line, fmt)
        if toks is None:
            raise ParseError(f"malformed ratings line {line!r}", lineno, path)
        u, i = toks[0].strip(), toks[1].strip()
        try:
            r = float(toks[2])
        except ValueError:
            if fmt == "csv_triplets" and lineno == 1:
                continue
            raise ParseError(f"rating is not a number: {toks[2]!r}", lineno, path) from None
        if not u or not i:
            raise ParseError("empty user or item id", lineno, path)
        if not np.isfinite(r):
            raise ParseError("rating must be finite", lineno, path)
        entries[(u, i)] = r
    return entries


def _dense_ids(keys, pos):
    ids = {}
    for key in keys:
        ids.setdefault(key[pos], len(ids))
    return ids


def ingest_ratings(path, fmt="double_colon", holdout_fraction=0.0, seed=0,
                   user_features=None, item_features=None, user_graph=None, item_graph=None,
                   k=FEATURE_GRAPH_K):
    """Read a ratings file into a ``RatingsDataset``.

    Raw ids are remapped to dense 0-based indices in order of first
    appearance in the file. ``holdout_fraction`` of the ratings are withheld
    as ``test`` using a split that depends only on ``seed``. Optional feature
    CSVs (one row per dense id) become ``k``-NN graphs; pre-built graph files
    may be passed instead.
    """
    if not (0 <= holdout_fraction < 1):
        raise BadParameter(f"holdout_fraction must lie in [0, 1), got {holdout_fraction}")
    with open(path) as fh:
        lines = fh.read().splitlines()

    entries = parse_ratings(lines, fmt, path)
    if not entries:
        raise EmptyDataset(f"{path}: no ratings found")
    order = list(entries)
    users = _dense_ids(order, 0)
    items = _dense_ids(order, 1)

    rows = np.array([users[u] for u, _ in order], dtype=np.int64)
    cols = np.array([items[i] for _, i in order], dtype=np.int64)
    vals = np.array([entries[key] for key in order], dtype=float)
    m, n = len(users), len(items)
    full = ObservationSet(m, n, rows, cols, vals, len(vals) / (m * n))

    if holdout_fraction > 0:
        train, test = split(full, holdout_fraction, seed)
        train = train.with_p(train.size / (m * n))
        if train.size == 0:
            raise EmptyDataset("holdout leaves no training ratings")
    else:
        train, test = full, None

    G1 = _side_graph(user_features, user_graph, m, k, "user")
    G2 = _side_graph(item_features, item_graph, n, k, "item")
    return RatingsDataset(train, test, list(users), list(items), G1, G2)


def _side_graph(features, graph, size, k, what):
    if features is not None and graph is not None:
        raise BadParameter(f"give either {what} features or a {what} graph, not both")
    if graph is not None:
        G = graph if isinstance(graph, SimilarityGraph) else read_graph(graph)
    elif features is not None:
        X = features if isinstance(features, np.ndarray) else read_matrix(features)
        if X.shape[0] != size:
            raise DimensionMismatch(f"{what} features have {X.shape[0]} rows, expected {size}")
        G = knn_graph(X, min(k, size - 1))
    else:
        return None
    if G.n != size:
        raise DimensionMismatch(f"{what} graph has {G.n} vertices, expected {size}")
    return G
