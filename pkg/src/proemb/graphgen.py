"""Ego-networks whose ties form by latent homophily.

Two generators are provided: a homophilic perfect matching (dyads) and a
homophilic preferential-attachment growth model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import as_generator, cosine_matrix

DYAD_EPS = 1e-6


@dataclass
class EgoNetwork:
    n: int
    adjacency: list[np.ndarray]
    model: str = "dyadic"
    params: dict = field(default_factory=dict)

    @property
    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self.adjacency], dtype=np.int64)

    @property
    def n_edges(self) -> int:
        return int(self.degrees.sum()) // 2

    def edges(self) -> np.ndarray:
        """Undirected edges as an ``(E, 2)`` array with ``src < dst``, sorted."""
        out = [(i, int(j)) for i, nb in enumerate(self.adjacency) for j in nb if i < j]
        if not out:
            return np.zeros((0, 2), dtype=np.int64)
        return np.array(sorted(out), dtype=np.int64)

    def neighbors(self, i: int) -> np.ndarray:
        return self.adjacency[i]

    def validate(self) -> None:
        if len(self.adjacency) != self.n:
            raise ValueError("adjacency length does not match node count")
        for i, nb in enumerate(self.adjacency):
            if np.any(nb == i):
                raise ValueError(f"self-loop at node {i}")
            if len(np.unique(nb)) != len(nb):
                raise ValueError(f"duplicate edge at node {i}")
            if np.any(np.diff(nb) <= 0):
                raise ValueError(f"neighbor list of node {i} is not sorted")
            for j in nb:
                if i not in set(self.adjacency[j].tolist()):
                    raise ValueError(f"edge {i}-{j} is not symmetric")

    @classmethod
    def from_edges(cls, n: int, edges, model: str = "dyadic", params: dict | None = None):
        sets = [set() for _ in range(n)]
        for a, b in np.asarray(edges, dtype=np.int64).reshape(-1, 2):
            if a == b:
                raise ValueError(f"self-loop at node {a}")
            sets[a].add(int(b))
            sets[b].add(int(a))
        adj = [np.array(sorted(s), dtype=np.int64) for s in sets]
        return cls(n=n, adjacency=adj, model=model, params=dict(params or {}))


def _as_matrix(U) -> np.ndarray:
    return np.asarray(getattr(U, "U", U), dtype=float)


def gen_dyads(U, rng, eps: float = DYAD_EPS) -> EgoNetwork:
    """Homophilic perfect matching.

    Unmatched nodes are visited in random order; each picks a partner among
    the remaining unmatched nodes with weight ``max(cos, 0) + eps``.
    """
    U = _as_matrix(U)
    n = U.shape[0]
    if n % 2:
        raise ValueError(f"dyadic matching needs an even node count, got {n}")
    g = as_generator(rng)
    C = np.maximum(cosine_matrix(U), 0.0)
    unmatched = np.ones(n, dtype=bool)
    partner = np.full(n, -1, dtype=np.int64)
    for i in g.permutation(n):
        if not unmatched[i]:
            continue
        unmatched[i] = False
        cand = np.flatnonzero(unmatched)
        w = C[i, cand] + eps
        j = cand[g.choice(cand.size, p=w / w.sum())]
        unmatched[j] = False
        partner[i], partner[j] = j, i
    adj = [np.array([partner[i]], dtype=np.int64) for i in range(n)]
    return EgoNetwork(n=n, adjacency=adj, model="dyadic", params={"eps": eps})


def attachment_weights(cos_row: np.ndarray, degrees: np.ndarray) -> np.ndarray:
    """Attachment probabilities ``max(cos,0)*k / sum``.

    Falls back to plain degree weighting when every clamped cosine is zero,
    and to uniform weights when degrees are zero as well.
    """
    w = np.maximum(cos_row, 0.0) * degrees
    if w.sum() <= 0:
        w = degrees.astype(float)
    if w.sum() <= 0:
        w = np.ones_like(w, dtype=float)
    return w / w.sum()


def gen_homophily_ba(U, m0: int = 3, m: int = 3, rng=None, homophily: bool = True) -> EgoNetwork:
    """Degree- and similarity-weighted preferential attachment.

    Starts from ``m0`` fully connected seed nodes; each arriving node attaches
    to ``m`` distinct existing nodes drawn sequentially without replacement.
    ``homophily=False`` drops the cosine factor (plain preferential attachment).
    """
    U = _as_matrix(U)
    n = U.shape[0]
    if not (n >= m0 >= m >= 1):
        raise ValueError(f"need n >= m0 >= m >= 1, got n={n}, m0={m0}, m={m}")
    g = as_generator(rng)
    unit = U / np.linalg.norm(U, axis=1, keepdims=True) if homophily else None
    deg = np.zeros(n, dtype=np.int64)
    nbrs = [[] for _ in range(n)]
    for i in range(m0):
        for j in range(i + 1, m0):
            nbrs[i].append(j)
            nbrs[j].append(i)
    deg[:m0] = m0 - 1
    for j in range(m0, n):
        if homophily:
            cos = np.clip(unit[:j] @ unit[j], -1.0, 1.0)
        else:
            cos = np.ones(j)
        avail = np.ones(j, dtype=bool)
        picked = []
        for _ in range(m):
            cand = np.flatnonzero(avail)
            p = attachment_weights(cos[cand], deg[cand])
            t = cand[g.choice(cand.size, p=p)]
            avail[t] = False
            picked.append(t)
        for t in picked:
            nbrs[t].append(j)
            nbrs[j].append(t)
            deg[t] += 1
        deg[j] = m
    adj = [np.array(sorted(a), dtype=np.int64) for a in nbrs]
    return EgoNetwork(
        n=n, adjacency=adj, model="homophily_ba" if homophily else "ba", params={"m0": m0, "m": m}
    )


def write_edge_list(G: EgoNetwork, path) -> None:
    """CSV ``src,dst`` with one undirected edge per line and ``src < dst``."""
    lines = ["src,dst"] + [f"{a},{b}" for a, b in G.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path, n: int | None = None, model: str = "dyadic") -> EgoNetwork:
    rows = Path(path).read_text().strip().splitlines()
    if not rows or rows[0].strip() != "src,dst":
        raise ValueError(f"{path}: expected header 'src,dst'")
    edges = np.array([[int(v) for v in r.split(",")] for r in rows[1:] if r.strip()], dtype=np.int64)
    edges = edges.reshape(-1, 2)
    if n is None:
        n = int(edges.max()) + 1 if edges.size else 0
    return EgoNetwork.from_edges(n, edges, model=model)
