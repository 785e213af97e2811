import networkx as nx

from setinject.core import graph_from_edges, permute_graph
from setinject.wl import ColorTable, wl_distinguishes, wl_refine, wl_refine_many
from conftest import random_graph


def test_triangle_single_color(triangle):
    col = wl_refine(triangle, k_max=4)
    assert all(len(set(c.tolist())) == 1 for c in col.iterations)
    assert col.stabilized


def test_path_two_colors_after_one_round(path3):
    col = wl_refine(path3, k_max=3)
    assert col.n_colors(0) == 1
    assert col.n_colors(1) == 2
    assert col.iterations[1][0] == col.iterations[1][2] != col.iterations[1][1]


def test_relabeling_same_final_histogram(rng):
    g = random_graph(rng, (6, 12))
    h = permute_graph(g, rng.permutation(g.n))
    a, b = wl_refine_many([g, h], k_max=10)
    assert a.histogram(len(a.iterations) - 1) == b.histogram(len(b.iterations) - 1)


def test_k3_vs_p3():
    k3 = graph_from_edges(3, [(0, 1), (1, 2), (0, 2)])
    p3 = graph_from_edges(3, [(0, 1), (1, 2)])
    assert wl_distinguishes(k3, p3) == 1
    assert wl_distinguishes(k3, p3, k_max=0) is None


def test_isomorphic_not_distinguished(rng):
    for _ in range(10):
        g = random_graph(rng, (4, 10))
        assert wl_distinguishes(g, permute_graph(g, rng.permutation(g.n))) is None


def test_regular_graphs_are_invisible():
    # C6 and two disjoint triangles are both 2-regular: colour refinement never splits them
    c6 = graph_from_edges(6, [(i, (i + 1) % 6) for i in range(6)])
    two_k3 = graph_from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])
    assert wl_distinguishes(c6, two_k3) is None


def test_initial_labels_at_round_zero():
    g = graph_from_edges(2, [(0, 1)])
    assert wl_distinguishes(g, g, labels1=[0, 0], labels2=[0, 1]) == 0


def _nx_graph(g):
    G = nx.Graph()
    G.add_nodes_from(range(g.n))
    G.add_edges_from(map(tuple, g.edges.tolist()))
    return G


def test_agrees_with_networkx_wl_hash(rng):
    # independent oracle: networkx's WL subtree hash after k rounds
    for _ in range(40):
        g1, g2 = random_graph(rng, (4, 8)), random_graph(rng, (4, 8))
        if g1.n != g2.n:
            continue
        k = wl_distinguishes(g1, g2, k_max=3)
        for it in range(1, 4):
            same = nx.weisfeiler_lehman_graph_hash(_nx_graph(g1), iterations=it) == nx.weisfeiler_lehman_graph_hash(
                _nx_graph(g2), iterations=it
            )
            assert same == (k is None or k > it)


def test_color_table_sorted_interning():
    t = ColorTable()
    assert t.intern(["b", "a", "b"]) == [1, 0, 1]
    assert t.intern(["c", "a"]) == [2, 0]
    assert len(t) == 3
