"""T-learner: one outcome model per treatment arm, ITE as their difference."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .learners import BaseLearnerSpec, make_learner


class EmptyArmError(ValueError):
    """One treatment arm has no nodes, so the contrast is not identified."""


@dataclass
class TLearnerModel:
    mu_t: object
    mu_c: object
    feature_dim: int
    spec: BaseLearnerSpec | None = None

    def swapped(self) -> "TLearnerModel":
        return TLearnerModel(self.mu_c, self.mu_t, self.feature_dim, self.spec)


@dataclass
class EstimateReport:
    ace_hat: float
    ite: np.ndarray
    method: str = ""
    seed: int | None = None
    config_digest: str = ""
    base_learner: dict = field(default_factory=dict)
    d_or_V: int | None = None

    @property
    def n(self) -> int:
        return int(self.ite.shape[0])

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "ace_hat": float(self.ace_hat),
            "seed": self.seed,
            "n": self.n,
            "d_or_V": self.d_or_V,
            "base_learner": self.base_learner,
            "config_digest": self.config_digest,
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def write_ite_csv(self, path) -> None:
        lines = ["node,ite"] + [f"{i},{v!r}" for i, v in enumerate(self.ite.tolist())]
        Path(path).write_text("\n".join(lines) + "\n")


def config_digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def fit_tlearner(X, treat, y_fact, spec: BaseLearnerSpec | None = None, rng=None) -> TLearnerModel:
    """Fit the treated-arm and control-arm regressions of ``y_fact`` on ``X``."""
    from ..numerics import RngStream

    spec = spec or BaseLearnerSpec()
    X = np.asarray(X, dtype=float)
    treat = np.asarray(treat)
    y_fact = np.asarray(y_fact, dtype=float)
    if X.ndim != 2 or X.shape[0] != treat.shape[0] or X.shape[0] != y_fact.shape[0]:
        raise ValueError("X, treat and y_fact must agree on the number of nodes")
    t = treat == 1
    if t.all() or not t.any():
        raise EmptyArmError("one treatment arm is empty; the contagion effect is not identified")
    if rng is None:
        rng = RngStream(0)
    rt = rng.spawn("treated") if isinstance(rng, RngStream) else rng
    rc = rng.spawn("control") if isinstance(rng, RngStream) else rng
    mu_t = make_learner(spec, rt).fit(X[t], y_fact[t])
    mu_c = make_learner(spec, rc).fit(X[~t], y_fact[~t])
    return TLearnerModel(mu_t, mu_c, X.shape[1], spec)


def predict_ite(model: TLearnerModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.feature_dim:
        raise ValueError(f"expected {model.feature_dim} features, got shape {X.shape}")
    return model.mu_t.predict(X) - model.mu_c.predict(X)


def estimate_ace(model: TLearnerModel, X, method: str = "", seed=None, digest: str = "") -> EstimateReport:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need at least one node to average over")
    ite = predict_ite(model, X)
    return EstimateReport(
        ace_hat=float(np.mean(ite)),
        ite=ite,
        method=method,
        seed=seed,
        config_digest=digest,
        base_learner=model.spec.describe() if model.spec else {},
        d_or_V=model.feature_dim,
    )


def standardize_columns(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    sd = X.std(axis=0)
    return (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0)


def fit_naive_tlearner(Ztilde, treat, y_fact, spec: BaseLearnerSpec | None = None, rng=None,
                       method: str = "", seed=None) -> EstimateReport:
    """T-learner straight on the standardized raw proxies (no embedding)."""
    X = standardize_columns(Ztilde)
    model = fit_tlearner(X, treat, y_fact, spec, rng)
    return estimate_ace(model, X, method=method, seed=seed)
