import numpy as np
import pytest

from metagdn.graph import AttributedGraph


def random_graph(rng, n, p=0.2, d=3):
    iu = np.triu_indices(n, k=1)
    mask = rng.random(len(iu[0])) < p
    edges = np.stack([iu[0][mask], iu[1][mask]], axis=1)
    return AttributedGraph.from_edges(n, edges, rng.standard_normal((n, d)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one "PASS|FAIL criterion: detail" line per acceptance criterion
ACCEPTANCE = {}


def record(criterion, ok, detail):
    ACCEPTANCE[criterion] = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    print(ACCEPTANCE[criterion])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
