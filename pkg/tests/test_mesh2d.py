from fractions import Fraction

import pytest

from frontreuse.mesh2d import (IrregularMeshError, MeshError, Point2, _split, active_elements,
                               hanging_edges, irregular_elements, is_one_irregular,
                               mesh_document, new_lshape_mesh, new_two_element_mesh,
                               new_two_singularity_mesh, refine_n, refine_towards_singularities,
                               tiling_defect, Mesh)


def count_leaves(mesh):
    """Independent traversal from the roots."""
    stack, n = list(mesh.roots), 0
    while stack:
        e = mesh.nodes[stack.pop()]
        if e.children:
            stack.extend(e.children)
        else:
            n += 1
    return n


def brute_hanging_edges(mesh):
    """Pairwise scan: a coarse side fully covered by two half-length finer sides."""
    act = [mesh.nodes[i] for i in active_elements(mesh)]
    found = 0
    for e in act:
        for s in "SENW":
            edge = e.side(s)
            halves = []
            for f in act:
                if f.level != e.level + 1:
                    continue
                for t in "SENW":
                    fe = f.side(t)
                    on_line = (fe.a.x == fe.b.x == edge.a.x and edge.a.y <= fe.a.y and fe.b.y <= edge.b.y) or \
                              (fe.a.y == fe.b.y == edge.a.y and edge.a.x <= fe.a.x and fe.b.x <= edge.b.x)
                    if on_line:
                        halves.append(fe)
            if len(halves) == 2:
                found += 1
    return found


def radical(l):
    return refine_n(new_two_element_mesh(2, 1, Point2(1, 0)), l)


def test_two_element_mesh_layout():
    m = new_two_element_mesh(2, 1, Point2(1, 0))
    e0, e1 = (m.nodes[i] for i in active_elements(m))
    assert (e0.x0, e0.x1, e1.x0, e1.x1) == (0, 1, 1, 2)
    assert m.singularities == (Point2(1, 0),)
    assert e0.contains(Point2(1, 0)) and e1.contains(Point2(1, 0))


def test_two_element_mesh_errors():
    with pytest.raises(MeshError):
        new_two_element_mesh(2, 1, Point2(3, 0))
    with pytest.raises(MeshError):
        new_two_element_mesh(0, 1, Point2(0, 0))
    with pytest.raises(MeshError):
        Point2(float("nan"), 0)


def test_corner_singularity_has_one_adjacent_element():
    m = new_two_element_mesh(2, 1, Point2(0, 0))
    adj = [i for i in active_elements(m) if m.nodes[i].contains(Point2(0, 0))]
    assert len(adj) == 1


def test_lshape_mesh():
    m = new_lshape_mesh()
    assert len(active_elements(m)) == 3
    assert Point2(0, 0) in m.singularities
    assert all(m.nodes[i].contains(Point2(0, 0)) for i in active_elements(m))
    assert is_one_irregular(m)
    assert m.domain_area == 3


def test_two_singularity_mesh():
    m = new_two_singularity_mesh()
    assert len(active_elements(m)) == 4 and len(m.singularities) == 2
    adj = [(m.nodes[i].x0, m.nodes[i].x1) for i in active_elements(m)
           if m.nodes[i].contains(Point2(1, 0))]
    assert adj == [(0, 1), (1, 2)]
    adj3 = {i for i in active_elements(m) if m.nodes[i].contains(Point2(3, 0))}
    adj1 = {i for i in active_elements(m) if m.nodes[i].contains(Point2(1, 0))}
    assert not adj1 & adj3


def test_refinement_counts():
    m1, m2 = radical(1), radical(2)
    assert len(active_elements(m1)) == 8
    assert {m1.nodes[i].level for i in active_elements(m1)} == {1}
    levels = [m2.nodes[i].level for i in active_elements(m2)]
    assert levels == [1] * 6 + [2] * 8


@pytest.mark.parametrize("l", range(1, 11))
def test_element_count_formula(l):
    m = radical(l)
    assert count_leaves(m) == 6 * l + 2
    assert len(active_elements(m)) == count_leaves(m)


def test_refine_is_pure_and_deterministic():
    m = radical(2)
    before = dict(m.nodes)
    a = refine_towards_singularities(m)
    b = refine_towards_singularities(m)
    assert m.nodes == before and m.refinement_count == 2
    assert a == b and a.refinement_count == 3


def test_children_order_and_ids():
    m = radical(1)
    root = m.nodes[0]
    sw, se, nw, ne = (m.nodes[c] for c in root.children)
    assert root.children == (2, 3, 4, 5)
    assert (sw.x0, sw.y0) == (0, 0) and (se.x0, se.y0) == (Fraction(1, 2), 0)
    assert (nw.x0, nw.y0) == (0, Fraction(1, 2)) and (ne.x0, ne.y0) == (Fraction(1, 2), Fraction(1, 2))
    assert all(m.nodes[c].level == 1 and m.nodes[c].parent == 0 for c in root.children)


@pytest.mark.parametrize("factory", [new_lshape_mesh, new_two_singularity_mesh,
                                     lambda: new_two_element_mesh(2, 1, Point2(1, 0))])
def test_invariants_and_closure_noop(factory):
    m = factory()
    for _ in range(6):
        # singular splits only: closure must add nothing on these sequences
        nodes = dict(m.nodes)
        for eid in [i for i in active_elements(m) if any(m.nodes[i].contains(s) for s in m.singularities)]:
            _split(nodes, eid)
        raw = Mesh(m.roots, nodes, m.singularities, m.refinement_count + 1)
        m = refine_towards_singularities(m)
        assert m == raw
        assert tiling_defect(m) <= 1e-12
        assert is_one_irregular(m)


def test_singular_neighbourhood_shrinks_by_two():
    m = new_lshape_mesh()
    diams = []
    for _ in range(5):
        m = refine_towards_singularities(m)
        adj = [m.nodes[i] for i in active_elements(m) if m.nodes[i].contains(Point2(0, 0))]
        assert len(adj) <= 4
        sizes = {e.diameter for e in adj}
        assert len(sizes) == 1
        diams.append(sizes.pop())
    assert all(b == a / 2 for a, b in zip(diams, diams[1:]))


def test_hanging_edges_counts():
    assert hanging_edges(new_two_element_mesh(2, 1, Point2(1, 0))) == []
    assert hanging_edges(radical(1)) == []
    m = radical(2)
    assert len(hanging_edges(m)) == brute_hanging_edges(m) == 4
    ls = refine_n(new_lshape_mesh(), 2)
    assert len(hanging_edges(ls)) == brute_hanging_edges(ls) == 6
    for l in range(3, 6):
        mm = radical(l)
        assert len(hanging_edges(mm)) == brute_hanging_edges(mm)


def test_hanging_edge_geometry():
    for h in hanging_edges(radical(3)):
        low, up = h.fine
        assert low.a == h.coarse.a and up.b == h.coarse.b and low.b == up.a == h.coarse.midpoint


def test_irregularity_detected(irregular_mesh):
    m = irregular_mesh
    assert irregular_elements(m) == [1]
    with pytest.raises(IrregularMeshError):
        hanging_edges(m)


def test_closure_refinement_repairs_irregularity(irregular_mesh):
    fixed = refine_towards_singularities(irregular_mesh)
    assert is_one_irregular(fixed)
    assert tiling_defect(fixed) == 0


def test_mesh_document():
    doc = mesh_document(radical(2))
    active = [e for e in doc["elements"] if e["active"]]
    assert len(active) == 14
    assert doc["singularities"] == [[1.0, 0.0]]
    assert [e["id"] for e in doc["elements"]] == list(range(len(doc["elements"])))
    assert len(mesh_document(new_two_element_mesh(2, 1, Point2(1, 0)))["elements"]) == 2
