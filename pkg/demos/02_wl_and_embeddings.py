"""
Colour refinement versus the network
====================================

1-WL colour refinement is the yardstick for message passing networks. Here the
untrained fixed-power network separates every pair of small graphs that
refinement separates, and merges the pairs that refinement cannot tell apart.
"""
import networkx as nx
import numpy as np
from networkx.generators.atlas import graph_atlas_g

from setinject import Graph, build_model, graph_from_edges, wl_distinguishes
from setinject.gnn import max_degree

###############################################################################
# A triangle and a path on three nodes differ after one round of refinement
# (degree 2, 2, 2 against 1, 2, 1).
k3 = graph_from_edges(3, [(0, 1), (1, 2), (0, 2)])
p3 = graph_from_edges(3, [(0, 1), (1, 2)])
print("K3 vs P3 separated at round", wl_distinguishes(k3, p3))

###############################################################################
# Regular graphs of equal size and degree look the same to refinement forever.
c6 = graph_from_edges(6, [(i, (i + 1) % 6) for i in range(6)])
two_triangles = graph_from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])
print("C6 vs 2xK3:", wl_distinguishes(c6, two_triangles))

###############################################################################
# Now every connected graph with at most 6 nodes.
graphs = [
    Graph(G.number_of_nodes(), np.array(list(G.edges())).reshape(-1, 2), np.ones((G.number_of_nodes(), 1)))
    for G in graph_atlas_g()
    if 0 < G.number_of_nodes() <= 6 and nx.is_connected(G)
]
model = build_model("exp-fixed", 1, 2, max_degree(graphs), seed=0, layers=3, premix=True)
emb, _ = model.predict(graphs)

agree = disagree = 0
for i in range(len(graphs)):
    for j in range(i + 1, len(graphs)):
        wl_sep = wl_distinguishes(graphs[i], graphs[j], k_max=3) is not None
        net_sep = np.abs(emb[i] - emb[j]).max() > 1e-8
        agree += wl_sep == net_sep
        disagree += wl_sep != net_sep
print(f"{len(graphs)} graphs: network agrees with 3-round WL on {agree} pairs, disagrees on {disagree}")

###############################################################################
# The cycle pair again. With all-ones features the network is blind to it
# too, since sums over neighbours are the same in both.
e1, _ = model.predict([c6])
e2, _ = model.predict([two_triangles])
print("C6 vs 2xK3 embedding gap:", np.abs(e1 - e2).max())
