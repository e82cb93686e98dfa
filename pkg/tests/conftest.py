import numpy as np
import pytest

from gsgd.graphs import SimilarityGraph, build_operator
from gsgd.synthetic import SynthConfig


def random_connected_graph(n, rng, extra=None):
    """Random spanning tree plus ``extra`` random chords, unit weights."""
    perm = rng.permutation(n)
    pairs = set()
    for i in range(1, n):
        a, b = perm[i], perm[rng.integers(0, i)]
        pairs.add((min(a, b), max(a, b)))
    extra = n if extra is None else extra
    while extra > 0 and len(pairs) < n * (n - 1) // 2:
        a, b = rng.integers(0, n, size=2)
        if a != b and (min(a, b), max(a, b)) not in pairs:
            pairs.add((min(a, b), max(a, b)))
            extra -= 1
    w = rng.uniform(0.5, 2.0, size=len(pairs))
    return SimilarityGraph.from_pairs(n, sorted(pairs), w)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_ops(rng):
    G1 = random_connected_graph(7, rng)
    G2 = random_connected_graph(5, rng)
    return build_operator(G1, 1.0, 1.0), build_operator(G2, 1.0, 1.0), G1, G2


@pytest.fixture(scope="session")
def synth200():
    return SynthConfig(m=200, n=200, r=5, seed=0)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
