import numpy as np
import pytest

from setinject.core import Graph, graph_from_edges


def random_graph(rng, n_range=(3, 10), d=3, p=0.35, label=None):
    """Erdős–Rényi graph with Gaussian node features."""
    n = int(rng.integers(*n_range))
    iu = np.triu_indices(n, 1)
    keep = rng.random(len(iu[0])) < p
    edges = np.stack([iu[0][keep], iu[1][keep]], axis=1)
    return Graph(n, edges, rng.normal(size=(n, d)), label)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def triangle():
    return graph_from_edges(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def path3():
    return graph_from_edges(3, [(0, 1), (1, 2)])


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, in order."""
    lines = []
    for outcome in ("passed", "failed", "skipped"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance" not in getattr(rep, "nodeid", "") or rep.when not in ("call", "setup"):
                continue
            if rep.when == "setup" and outcome != "skipped":
                continue
            props = dict(getattr(rep, "user_properties", []))
            crit = props.get("criterion") or rep.nodeid.split("::")[-1].split("_")[1]
            lines.append((crit, outcome, props.get("detail", "")))
    if not lines:
        return
    word = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}
    terminalreporter.section("acceptance criteria")
    for crit, outcome, detail in sorted(lines, key=lambda t: int(t[0][1:])):
        terminalreporter.write_line(f"{crit} {word[outcome]}  {detail}")
