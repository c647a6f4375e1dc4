"""Synthetic confounders, proxies, activations and potential outcomes.

Nodes carry latent topic mixtures ``U``. Observed proxies are bag-of-words
counts drawn from those topics: the node's own document (``Z``) and the mean
of its neighbors' documents (``Zngb``). Outcomes follow a linear model with a
shared noise draw, so the factual/counterfactual gap is exactly ``tau``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graphgen import EgoNetwork
from .numerics import (
    TOL,
    sample_bernoulli,
    sample_dirichlet,
    sample_gaussian,
    sample_multinomial,
    sample_poisson,
    sigmoid,
)

TOPIC_CONCENTRATION = 0.1
WORD_CONCENTRATION = 0.01


@dataclass
class ConfounderSet:
    U: np.ndarray

    @property
    def n(self) -> int:
        return self.U.shape[0]

    @property
    def d(self) -> int:
        return self.U.shape[1]


@dataclass
class ProxyPanel:
    Z: np.ndarray
    Zngb: np.ndarray
    topics: np.ndarray | None = None

    @property
    def V(self) -> int:
        return self.Z.shape[1]

    @property
    def Ztilde(self) -> np.ndarray:
        return np.hstack([self.Z, self.Zngb])


@dataclass
class OutcomePanel:
    y_prev: np.ndarray
    treat: np.ndarray
    y_fact: np.ndarray
    y_cf: np.ndarray
    tau: float
    alpha_u: np.ndarray | None = None
    beta_u: np.ndarray | None = None
    beta_y: float = 0.2

    @property
    def n(self) -> int:
        return self.y_fact.shape[0]

    def potential_outcomes(self) -> tuple[np.ndarray, np.ndarray]:
        """``(Y(1), Y(0))`` per node, reassembled from factual and counterfactual."""
        t = self.treat.astype(bool)
        y1 = np.where(t, self.y_fact, self.y_cf)
        y0 = np.where(t, self.y_cf, self.y_fact)
        return y1, y0


def gen_confounders(n: int, d: int, rng, concentration: float = TOPIC_CONCENTRATION) -> ConfounderSet:
    if n < 2 or d < 2:
        raise ValueError(f"need n >= 2 and d >= 2, got n={n}, d={d}")
    U = sample_dirichlet(rng, np.full(d, concentration), size=n)
    return ConfounderSet(U=U)


def neighbor_mean(Z: np.ndarray, G: EgoNetwork) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    out = np.empty_like(Z, dtype=float)
    for i, nb in enumerate(G.adjacency):
        if len(nb) == 0:
            raise ValueError(f"node {i} is isolated; every ego needs at least one neighbor")
        out[i] = Z[nb].mean(axis=0)
    return out


def gen_proxies(
    U,
    G: EgoNetwork,
    V: int = 2000,
    doc_len: int = 50,
    rng=None,
    topics: np.ndarray | None = None,
    word_concentration: float = WORD_CONCENTRATION,
) -> ProxyPanel:
    """Bag-of-words proxies from a topic model.

    A topic-word matrix (``d x V``) is drawn once unless ``topics`` is given.
    Node ``i`` writes ``Poisson(doc_len)`` words from ``topics.T @ U_i``.
    """
    U = np.asarray(getattr(U, "U", U), dtype=float)
    n, d = U.shape
    if V < d:
        raise ValueError(f"vocabulary size V={V} must be at least the latent dimension d={d}")
    if G.n != n:
        raise ValueError(f"graph has {G.n} nodes but U has {n} rows")
    if np.any(G.degrees == 0):
        raise ValueError("isolated node found; every ego needs at least one neighbor")
    if topics is None:
        topics = sample_dirichlet(rng, np.full(V, word_concentration), size=d)
    else:
        topics = np.asarray(topics, dtype=float)
        if topics.shape != (d, V):
            raise ValueError(f"topics must have shape {(d, V)}, got {topics.shape}")
    lengths = sample_poisson(rng, doc_len, size=n)
    word_probs = U @ topics
    Z = sample_multinomial(rng, lengths, word_probs).astype(float)
    return ProxyPanel(Z=Z, Zngb=neighbor_mean(Z, G), topics=topics)


def gen_baseline_activation(U, alpha_u, rng, noise_std: float = 1.0) -> np.ndarray:
    """Binary activations ``Bernoulli(sigmoid(alpha_u . U_i + eps))``.

    ``noise_std=0`` suppresses the logit noise.
    """
    U = np.asarray(getattr(U, "U", U), dtype=float)
    alpha_u = np.asarray(alpha_u, dtype=float)
    if alpha_u.shape != (U.shape[1],):
        raise ValueError(f"alpha_u must have length {U.shape[1]}")
    eps = sample_gaussian(rng, 0.0, noise_std, size=U.shape[0])
    return sample_bernoulli(rng, sigmoid(U @ alpha_u + eps))


def apply_peer_activation(G: EgoNetwork, y_prev, p: float = 0.3, rng=None) -> np.ndarray:
    """One synchronous pass: inactive nodes with an active neighbor flip with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("peer activation probability must lie in [0, 1]")
    y_prev = np.asarray(y_prev, dtype=np.int64)
    exposed = np.array([y_prev[nb].any() for nb in G.adjacency], dtype=bool)
    eligible = (y_prev == 0) & exposed
    flips = sample_bernoulli(rng, np.full(G.n, p)).astype(bool)
    out = y_prev.copy()
    out[eligible & flips] = 1
    return out


def h_max(neighbor_outcomes) -> int:
    v = np.asarray(neighbor_outcomes)
    if v.size == 0:
        raise ValueError("h() needs at least one neighbor")
    return int(v.max() > 0)


def h_mean(neighbor_outcomes) -> int:
    v = np.asarray(neighbor_outcomes, dtype=float)
    if v.size == 0:
        raise ValueError("h() needs at least one neighbor")
    return int(v.mean() > 0.5)


AGGREGATORS = {"max": h_max, "mean": h_mean}


def compute_treatment(G: EgoNetwork, y_prev, h: str = "max") -> np.ndarray:
    try:
        fn = AGGREGATORS[h]
    except KeyError:
        raise ValueError(f"unknown aggregator {h!r}; expected one of {sorted(AGGREGATORS)}") from None
    y_prev = np.asarray(y_prev)
    return np.array([fn(y_prev[nb]) for nb in G.adjacency], dtype=np.int64)


OUTCOME_GRID = 2.0**32


def gen_outcomes(
    U,
    y_prev,
    treat,
    beta_u,
    beta_y: float = 0.2,
    tau: float = 1.0,
    rng=None,
    noise_std: float = 1.0,
    alpha_u=None,
) -> OutcomePanel:
    """Factual and counterfactual outcomes sharing one noise draw per node."""
    U = np.asarray(getattr(U, "U", U), dtype=float)
    n, d = U.shape
    beta_u = np.asarray(beta_u, dtype=float)
    y_prev = np.asarray(y_prev, dtype=np.int64)
    treat = np.asarray(treat, dtype=np.int64)
    if beta_u.shape != (d,):
        raise ValueError(f"beta_u must have length {d}, got shape {beta_u.shape}")
    if y_prev.shape != (n,) or treat.shape != (n,):
        raise ValueError("y_prev and treat must have one entry per node")
    if not np.isin(treat, (0, 1)).all():
        raise ValueError("treat must be binary")
    eps = sample_gaussian(rng, 0.0, noise_std, size=n)
    base = U @ beta_u + beta_y * y_prev + eps
    # Snap to a dyadic grid so that base + tau is exact and y_fact - y_cf == tau
    # bit for bit (for any tau on the same grid, including every integer).
    base = np.round(base * OUTCOME_GRID) / OUTCOME_GRID
    return OutcomePanel(
        y_prev=y_prev,
        treat=treat,
        y_fact=base + tau * treat,
        y_cf=base + tau * (1 - treat),
        tau=float(tau),
        alpha_u=None if alpha_u is None else np.asarray(alpha_u, dtype=float),
        beta_u=beta_u,
        beta_y=float(beta_y),
    )


def true_ace(panel: OutcomePanel) -> float:
    y1, y0 = panel.potential_outcomes()
    return float(np.mean(y1 - y0))


def check_simplex(cs: ConfounderSet) -> bool:
    U = cs.U
    return bool(np.all(U >= 0) and np.allclose(U.sum(axis=1), 1.0, atol=TOL["simplex"], rtol=0))


def panel_digest(proxies: ProxyPanel, outcomes: OutcomePanel, G: EgoNetwork | None = None) -> str:
    """SHA-256 over the arrays every estimator sees."""
    h = hashlib.sha256()
    for arr in (proxies.Z, proxies.Zngb, outcomes.y_prev, outcomes.treat, outcomes.y_fact, outcomes.y_cf):
        a = np.ascontiguousarray(arr)
        h.update(str(a.dtype).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    if G is not None:
        h.update(np.ascontiguousarray(G.edges()).tobytes())
    return h.hexdigest()


# -- exports -----------------------------------------------------------------

def write_panel_jsonl(outcomes: OutcomePanel, path) -> None:
    """One JSON object per node: ``node, y_prev, treat, y_fact, y_cf``."""
    with open(path, "w") as fh:
        for i in range(outcomes.n):
            rec = {
                "node": i,
                "y_prev": int(outcomes.y_prev[i]),
                "treat": int(outcomes.treat[i]),
                "y_fact": float(outcomes.y_fact[i]),
                "y_cf": float(outcomes.y_cf[i]),
            }
            fh.write(json.dumps(rec) + "\n")


def read_panel_jsonl(path, tau: float) -> OutcomePanel:
    recs = [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
    recs.sort(key=lambda r: r["node"])
    return OutcomePanel(
        y_prev=np.array([r["y_prev"] for r in recs], dtype=np.int64),
        treat=np.array([r["treat"] for r in recs], dtype=np.int64),
        y_fact=np.array([r["y_fact"] for r in recs], dtype=float),
        y_cf=np.array([r["y_cf"] for r in recs], dtype=float),
        tau=float(tau),
    )


def write_proxies(Z: np.ndarray, path, sparse: bool = False) -> None:
    """Own-document counts as a dense CSV or as ``node,word,count`` triplets."""
    Z = np.asarray(Z)
    counts = np.rint(Z).astype(np.int64)
    if not np.array_equal(counts, Z):
        raise ValueError("proxy export expects integer counts")
    with open(path, "w") as fh:
        if sparse:
            fh.write("node,word,count\n")
            rows, cols = np.nonzero(counts)
            for r, c in zip(rows, cols):
                fh.write(f"{r},{c},{counts[r, c]}\n")
        else:
            fh.write(",".join(f"w{j}" for j in range(counts.shape[1])) + "\n")
            for row in counts:
                fh.write(",".join(map(str, row)) + "\n")


def read_proxies(path, n: int | None = None, V: int | None = None) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    if lines[0].strip() == "node,word,count":
        trip = np.array([[int(v) for v in ln.split(",")] for ln in lines[1:] if ln.strip()], dtype=np.int64)
        trip = trip.reshape(-1, 3)
        if n is None or V is None:
            raise ValueError("sparse proxy files need explicit n and V")
        Z = np.zeros((n, V))
        Z[trip[:, 0], trip[:, 1]] = trip[:, 2]
        return Z
    return np.array([[float(v) for v in ln.split(",")] for ln in lines[1:] if ln.strip()])
