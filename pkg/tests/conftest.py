import pytest

from icnjfc.builtin import builtin_document
from icnjfc.topology import NetworkGraph, load_instance


@pytest.fixture(scope="session")
def fig1():
    return load_instance(builtin_document("fig1"))


def line_graph(n=3, capacity=1e7, caches=None, objects=1, size=1e6):
    """Nodes 0..n-1 in a bidirectional line, every object served by node n-1."""
    cap = {}
    for a in range(n - 1):
        cap[(a, a + 1)] = capacity
        cap[(a + 1, a)] = capacity
    caches = caches or (0,) * n
    return NetworkGraph(tuple(str(i) for i in range(n)), cap, tuple(caches), objects, size,
                        tuple(frozenset([n - 1]) for _ in range(objects)))


_ACCEPTANCE = []


@pytest.fixture
def acceptance(capsys):
    """Record one pass/fail line per acceptance criterion."""
    def report(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        _ACCEPTANCE.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
