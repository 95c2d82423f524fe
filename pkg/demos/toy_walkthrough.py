"""Coarsening a five-node graph by hand, then letting the solver do it."""
import numpy as np

from coarsenkit import GraphData, LoadingMatrix, SolverConfig, fgc_solve
from coarsenkit.graph import coarsen_laplacian, coarsening_matrix, laplacian_from_weights
from coarsenkit.metrics import evaluate

# five nodes, five weighted edges
w = np.zeros((5, 5))
for (i, j), v in {(0, 1): 2, (0, 2): 3, (0, 3): 1, (1, 2): 4, (2, 4): 5}.items():
    w[i, j] = w[j, i] = v
theta = laplacian_from_weights(w)
x = np.array([[0.4, 0.7], [0.2, 0.6], [0.5, 0.2], [0.1, 0.3], [0.3, 0.6]])

# merge nodes 0, 1, 2 into one supernode; nodes 3 and 4 stay alone
loading = LoadingMatrix.from_assignment([0, 0, 0, 1, 2])
theta_c = coarsen_laplacian(theta, loading)
p = coarsening_matrix(loading)
print("coarse Laplacian:\n", theta_c.toarray() if hasattr(theta_c, "toarray") else theta_c)
print("averaging matrix P:\n", np.round(p.toarray() if hasattr(p, "toarray") else p, 4))
print("supernode features PX:\n", p @ x)

# the edge inside the merged group vanishes, the ones leaving it add up
# (0-3 keeps weight 1, 2-4 keeps weight 5), and PX averages member features

graph = GraphData(theta, x, "toy")
result = fgc_solve(graph, SolverConfig(gamma=5, alpha=5, lam=5, k=3, seed=0))
print("learned assignment:", result.coarsened.loading.assignment)
print("energy similarity:", round(result.epsilon, 4))
print(evaluate(graph, result.coarsened).to_dict())
