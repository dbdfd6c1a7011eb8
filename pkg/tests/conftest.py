import pytest

from frontreuse.mesh2d import Mesh, Point2, _split, new_two_element_mesh


@pytest.fixture
def irregular_mesh():
    """Two-element grid whose left element is split twice towards the right one."""
    m = new_two_element_mesh(2, 1, Point2(1, 0))
    nodes = dict(m.nodes)
    _split(nodes, 0)
    se = nodes[0].children[1]  # touches element 1 (level 0)
    _split(nodes, se)
    return Mesh(m.roots, nodes, m.singularities, 2)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, ok, detail in sorted(results):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {num:2d}: {title}  [{detail}]")
