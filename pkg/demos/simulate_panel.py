"""Simulate one panel and look at what the estimators are up against.

Generates a homophilous BA ego network, the word-count proxies and the
outcomes, then prints graph and treatment statistics plus the naive and
oracle effect estimates.

    python3 demos/simulate_panel.py
"""

import numpy as np

from proemb.harness import ExperimentConfig, estimate, generate_run
from proemb.numerics import cosine_matrix

cfg = ExperimentConfig(n=600, V=500, runs=1, seed=3)
data = generate_run(cfg, 0)
G, o = data.graph, data.outcomes

deg = G.degrees
print(f"nodes {G.n}, edges {G.n_edges}, max degree {deg.max()}, median {np.median(deg):.0f}")

# neighbours share topics more than random pairs do
C = cosine_matrix(data.U.U)
e = G.edges()
g = np.random.default_rng(0)
rand = g.integers(0, G.n, size=(len(e), 2))
rand = rand[rand[:, 0] != rand[:, 1]]
print(f"mean topic cosine: edges {C[e[:, 0], e[:, 1]].mean():.3f}, random pairs {C[rand[:, 0], rand[:, 1]].mean():.3f}")

print(f"treated share {o.treat.mean():.2f}, words per node {data.proxies.Z.sum(axis=1).mean():.1f}")
for method in ("oracle", "zero", "OLS", "TSLS", "T-LR"):
    print(f"{method:>6}: {estimate(method, cfg, data):+.3f}   (truth {cfg.tau:+.1f})")
