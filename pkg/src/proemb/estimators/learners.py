"""Base learners for the T-learner: ridge regression, boosted trees, MLP."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..neural import AdamState, DenseNet, adam_step, minibatches, mse_loss
from ..numerics import solve_least_squares
from .gbm import GradientBoostedTrees


@dataclass(frozen=True)
class BaseLearnerSpec:
    kind: str = "gb"
    ridge: float = 1e-6
    trees: int = 100
    depth: int = 3
    shrinkage: float = 0.1
    hidden: tuple = (125, 125)
    lr: float = 1e-3
    epochs: int = 50
    batch: int = 128

    def __post_init__(self):
        if self.kind not in ("lr", "gb", "nn"):
            raise ValueError(f"unknown base learner {self.kind!r}")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")
        if self.trees < 1 or self.depth < 1:
            raise ValueError("need trees >= 1 and depth >= 1")

    @classmethod
    def linear(cls, ridge: float = 1e-6):
        return cls(kind="lr", ridge=ridge)

    @classmethod
    def boosted(cls, trees: int = 100, depth: int = 3, shrinkage: float = 0.1):
        return cls(kind="gb", trees=trees, depth=depth, shrinkage=shrinkage)

    @classmethod
    def mlp(cls, hidden=(125, 125), lr: float = 1e-3, epochs: int = 50):
        return cls(kind="nn", hidden=tuple(hidden), lr=lr, epochs=epochs)

    def describe(self) -> dict:
        if self.kind == "lr":
            return {"kind": "lr", "ridge": self.ridge}
        if self.kind == "gb":
            return {"kind": "gb", "trees": self.trees, "depth": self.depth, "shrinkage": self.shrinkage}
        return {"kind": "nn", "hidden": list(self.hidden), "lr": self.lr, "epochs": self.epochs,
                "batch": self.batch}


class LinearRidge:
    """Ridge regression with an unpenalized intercept."""

    def __init__(self, ridge: float = 1e-6):
        self.ridge = ridge

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self.x_mean_ = X.mean(axis=0)
        self.y_mean_ = float(y.mean())
        self.coef_ = solve_least_squares(X - self.x_mean_, y - self.y_mean_, self.ridge)
        self.intercept_ = self.y_mean_ - float(self.x_mean_ @ self.coef_)
        return self

    def predict(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.coef_ + self.intercept_


class MlpRegressor:
    """ReLU hidden layers trained with Adam on a standardized target.

    Inputs are used as given unless ``scale_inputs`` is set. Per-arm input
    scaling is off by default: a column that is nearly constant inside a
    small arm would get a tiny scale and blow up predictions elsewhere.
    """

    def __init__(self, hidden=(125, 125), lr: float = 1e-3, epochs: int = 50, batch: int = 128,
                 rng=None, scale_inputs: bool = False):
        self.scale_inputs = scale_inputs
        self.hidden = tuple(hidden)
        self.lr = lr
        self.epochs = epochs
        self.batch = batch
        self.rng = rng

    def fit(self, X, y):
        from ..numerics import RngStream

        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        rng = self.rng if self.rng is not None else RngStream(0)
        if not isinstance(rng, RngStream):
            rng = RngStream(int(np.random.default_rng(rng).integers(2**63)))
        if self.scale_inputs:
            self.x_mean_ = X.mean(axis=0)
            sd = X.std(axis=0)
            self.x_scale_ = np.where(sd > 0, sd, 1.0)
        else:
            self.x_mean_ = np.zeros(X.shape[1])
            self.x_scale_ = np.ones(X.shape[1])
        self.y_mean_ = float(y.mean())
        self.y_scale_ = float(y.std()) or 1.0
        Xs = (X - self.x_mean_) / self.x_scale_
        ys = ((y - self.y_mean_) / self.y_scale_)[:, None]
        sizes = [X.shape[1], *self.hidden, 1]
        acts = ["relu"] * len(self.hidden) + ["linear"]
        self.net_ = DenseNet.build(sizes, acts, rng.spawn("init"))
        opt = AdamState(self.net_.params(), lr=self.lr)
        shuffle = rng.spawn("shuffle")
        self.loss_trace_ = []
        for _ in range(self.epochs):
            total, nb = 0.0, 0
            for idx in minibatches(Xs.shape[0], self.batch, shuffle):
                out, cache = self.net_.forward(Xs[idx])
                loss, g = mse_loss(out, ys[idx])
                grads, _ = self.net_.backward(cache, g, input_grad=False)
                adam_step(self.net_, grads, opt)
                total += loss
                nb += 1
            self.loss_trace_.append(total / nb)
        return self

    def predict(self, X) -> np.ndarray:
        Xs = (np.asarray(X, dtype=float) - self.x_mean_) / self.x_scale_
        return self.net_.predict(Xs).ravel() * self.y_scale_ + self.y_mean_


def make_learner(spec: BaseLearnerSpec, rng=None):
    if spec.kind == "lr":
        return LinearRidge(spec.ridge)
    if spec.kind == "gb":
        return GradientBoostedTrees(spec.trees, spec.depth, spec.shrinkage)
    return MlpRegressor(spec.hidden, spec.lr, spec.epochs, spec.batch, rng=rng)
