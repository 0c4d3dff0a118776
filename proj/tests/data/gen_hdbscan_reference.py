"""Regenerates hdbscan_reference.json with scikit-learn's HDBSCAN.

Our min_samples counts neighbours excluding the point itself, so the
reference is run with min_samples + 1.
"""
import json

import numpy as np
from sklearn.cluster import HDBSCAN

rng = np.random.default_rng(7)
cases = []
for c in range(60):
    dim = int(rng.integers(2, 6))
    blobs = int(rng.integers(1, 4))
    pts = []
    for _ in range(blobs):
        centre = rng.normal(0, 10, dim)
        spread = rng.uniform(0.1, 2.0)
        for _ in range(int(rng.integers(2, 9))):
            pts.append(centre + rng.normal(0, spread, dim))
    for _ in range(int(rng.integers(0, 3))):
        pts.append(rng.normal(0, 30, dim))
    X = np.array(pts)
    labels = HDBSCAN(min_cluster_size=2, min_samples=2).fit(X).labels_
    cases.append({"points": X.tolist(), "labels": labels.tolist()})
with open("hdbscan_reference.json", "w") as f:
    json.dump({"min_cluster_size": 2, "min_samples": 1, "cases": cases}, f)
