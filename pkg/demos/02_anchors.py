"""Anchor decomposition: entity embeddings as mixtures of a few anchor rows."""

import numpy as np

from anchorkgc.anchors import fit_transform, init_from_features, kmeans, text_feature_matrix
from anchorkgc.synthetic import zipf_graph

rng = np.random.default_rng(0)

# when E really is T @ A, least squares recovers T up to rounding
A = rng.standard_normal((10, 64))
T = rng.standard_normal((200, 10))
E = T @ A
T_hat = fit_transform(E, A, ridge=0.0)
print("max |T_hat A - E| =", np.abs(T_hat @ A - E).max())

# three blobs; Lloyd's objective never rises
X = np.vstack([rng.normal(c, 0.3, (40, 2)) for c in ((0, 0), (3, 0), (0, 3))])
res = kmeans(X, 3, seed=0)
print("centroids\n", np.round(res.centroids, 2))
print("objective by iteration", np.round(res.history, 3))

# one cluster is just the mean
print(np.allclose(kmeans(X, 1).centroids[0], X.mean(0)))

# on a graph: hashed description features -> k-means anchors -> per-entity mixing weights
g = zipf_graph(seed=0)
F = text_feature_matrix(g, 32)
decomp, km = init_from_features(F, n_anchors=8, num_relations=g.num_relations, seed=0)
print("A", decomp.A.shape, "T", decomp._T.shape, "R", decomp.R.shape)
print("reconstruction error", np.linalg.norm(decomp.entity_embedding(np.arange(g.num_entities)) - F) / np.linalg.norm(F))
