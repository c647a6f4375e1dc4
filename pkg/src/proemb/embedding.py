"""Balanced proxy embeddings.

A variational autoencoder compresses the concatenated proxy vector
``[Z | Zngb]`` to a ``d``-dimensional latent code. A discriminator tries to
tell treated from control nodes from that code, and a balance penalty
``mean((D(z) - 0.5)^2)`` pushes the encoder toward codes it cannot separate.

Training alternates three updates per minibatch:

1. VAE step on encoder, heads and decoder.
2. Discriminator step on the (detached) sampled codes.
3. Balance step on encoder and heads, discriminator frozen.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .neural import AdamState, DenseNet, adam_step, minibatches
from .numerics import as_generator

log = logging.getLogger(__name__)

BCE_CLAMP = 1e-7


@dataclass
class TrainConfig:
    d: int = 20
    lr: float = 1e-3
    epochs: int = 50
    batch: int = 128
    lambda_rb: float = 1.0
    hidden: int = 100
    disc_hidden: int = 100
    schedule: str = "alternate"
    holdout: float = 0.2
    disc_label: str = "treat"
    balanced_disc: bool = True
    adversarial: bool = True
    logvar_clip: float = 10.0
    recon_reduction: str = "sum"
    scaling: str = "global"

    def __post_init__(self):
        if self.lambda_rb < 0:
            raise ValueError("lambda_rb must be nonnegative")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.d < 1:
            raise ValueError("latent dimension must be at least 1")
        if self.schedule != "alternate":
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.disc_label not in ("treat", "y_prev"):
            raise ValueError("disc_label must be 'treat' or 'y_prev'")
        if self.scaling not in ("global", "column"):
            raise ValueError("scaling must be 'global' or 'column'")
        if not 0.0 <= self.holdout < 1.0:
            raise ValueError("holdout must lie in [0, 1)")


class Standardizer:
    """Centers columns, then divides by one shared scale or by per-column scales.

    ``mode="global"`` keeps the relative size of frequent and rare words;
    per-column z-scores (``mode="column"``) inflate rare words and let them
    dominate the reconstruction loss. Constant columns map to zero in
    column mode.
    """

    def __init__(self, mode: str = "global"):
        if mode not in ("global", "column"):
            raise ValueError(f"unknown scaling mode {mode!r}")
        self.mode = mode

    def fit(self, X):
        X = np.asarray(X, dtype=float)
        self.mean_ = X.mean(axis=0)
        if self.mode == "column":
            std = X.std(axis=0)
            self.scale_ = np.where(std > 0, std, np.inf)
        else:
            std = float((X - self.mean_).std())
            self.scale_ = np.full(X.shape[1], std if std > 0 else 1.0)
        return self

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean_) / self.scale_

    def fit_transform(self, X):
        return self.fit(X).transform(X)


class ProEmbModel:
    def __init__(self, encoder: DenseNet, mu_head: DenseNet, logvar_head: DenseNet,
                 decoder: DenseNet, discriminator: DenseNet, logvar_clip: float = 10.0):
        self.encoder = encoder
        self.mu_head = mu_head
        self.logvar_head = logvar_head
        self.decoder = decoder
        self.discriminator = discriminator
        self.logvar_clip = logvar_clip
        self.standardizer: Standardizer | None = None
        self.trained = False

    @classmethod
    def build(cls, input_dim: int, d: int, rng, hidden: int = 100, disc_hidden: int = 100,
              logvar_clip: float = 10.0) -> "ProEmbModel":
        """Encoder ``input -> 3 x hidden`` (ReLU), affine mean/log-variance heads,
        decoder ``d -> 3 x hidden -> input`` and a 4-hidden-layer linear
        discriminator with a sigmoid output."""
        from .numerics import RngStream

        if isinstance(rng, RngStream):
            streams = [rng.spawn(k) for k in ("encoder", "mu", "logvar", "decoder", "disc")]
        else:
            g = as_generator(rng)
            streams = [np.random.default_rng(g.integers(2**63)) for _ in range(5)]
        enc = DenseNet.build([input_dim, hidden, hidden, hidden], "relu", streams[0])
        mu = DenseNet.build([hidden, d], "linear", streams[1])
        lv = DenseNet.build([hidden, d], "linear", streams[2])
        dec = DenseNet.build([d, hidden, hidden, hidden, input_dim],
                             ["relu", "relu", "relu", "linear"], streams[3])
        disc = DenseNet.build([d] + [disc_hidden] * 4 + [1],
                              ["linear"] * 4 + ["sigmoid"], streams[4])
        return cls(enc, mu, lv, dec, disc, logvar_clip)

    @property
    def d(self) -> int:
        return self.mu_head.n_out

    @property
    def input_dim(self) -> int:
        return self.encoder.n_in

    def encoder_nets(self) -> list[DenseNet]:
        return [self.encoder, self.mu_head, self.logvar_head]

    def vae_nets(self) -> list[DenseNet]:
        return self.encoder_nets() + [self.decoder]

    def copy(self) -> "ProEmbModel":
        m = ProEmbModel(self.encoder.copy(), self.mu_head.copy(), self.logvar_head.copy(),
                        self.decoder.copy(), self.discriminator.copy(), self.logvar_clip)
        m.standardizer = self.standardizer
        m.trained = self.trained
        return m

    # -- checkpoints ------------------------------------------------------

    def save(self, path, sidecar: dict | None = None) -> None:
        path = Path(path)
        blob = {
            name: getattr(self, name).to_dict()
            for name in ("encoder", "mu_head", "logvar_head", "decoder", "discriminator")
        }
        blob["logvar_clip"] = self.logvar_clip
        if self.standardizer is not None:
            blob["standardizer"] = {
                "mode": self.standardizer.mode,
                "mean": self.standardizer.mean_.tolist(),
                "scale": [None if not np.isfinite(s) else s for s in self.standardizer.scale_],
            }
        path.write_text(json.dumps(blob))
        if sidecar is not None:
            path.with_suffix(".meta.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "ProEmbModel":
        blob = json.loads(Path(path).read_text())
        nets = [DenseNet.from_dict(blob[k])
                for k in ("encoder", "mu_head", "logvar_head", "decoder", "discriminator")]
        model = cls(*nets, logvar_clip=blob["logvar_clip"])
        if "standardizer" in blob:
            st = Standardizer(blob["standardizer"].get("mode", "column"))
            st.mean_ = np.array(blob["standardizer"]["mean"], dtype=float)
            st.scale_ = np.array([np.inf if s is None else s for s in blob["standardizer"]["scale"]])
            model.standardizer = st
            model.trained = True
        return model


# -- forward pieces ------------------------------------------------------------

def _encode(model: ProEmbModel, X):
    h, c_enc = model.encoder.forward(X)
    mu, c_mu = model.mu_head.forward(h)
    lv_raw, c_lv = model.logvar_head.forward(h)
    clip = model.logvar_clip
    logvar = np.clip(lv_raw, -clip, clip)
    return mu, logvar, (c_enc, c_mu, c_lv, lv_raw)


def encode(model: ProEmbModel, X) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and log-variance for already standardized inputs."""
    mu, logvar, _ = _encode(model, X)
    return mu, logvar


def sample_latent(mu, logvar, rng=None, eta=None) -> np.ndarray:
    """Reparameterized draw ``mu + exp(logvar / 2) * eta`` with ``eta ~ N(0, I)``."""
    mu = np.asarray(mu, dtype=float)
    logvar = np.asarray(logvar, dtype=float)
    if mu.shape != logvar.shape:
        raise ValueError(f"mu shape {mu.shape} != logvar shape {logvar.shape}")
    if eta is None:
        eta = as_generator(rng).standard_normal(mu.shape)
    return mu + np.exp(0.5 * logvar) * eta


def decode(model: ProEmbModel, Zhat) -> np.ndarray:
    return model.decoder.predict(Zhat)


def _recon_scale(b, width, reduction):
    if reduction == "sum":
        return 1.0 / b
    if reduction == "mean":
        return 1.0 / (b * width)
    raise ValueError(f"unknown reduction {reduction!r}")


def vae_loss(Ztilde, Zrecon, mu, logvar, reduction: str = "sum") -> tuple[float, float, float]:
    """Squared reconstruction error plus the Gaussian KL to ``N(0, I)``.

    Both terms are averaged over rows and the KL is summed over latent units.
    ``reduction="sum"`` sums the squared error over proxy entries;
    ``"mean"`` averages it over entries instead.
    """
    Ztilde = np.asarray(Ztilde, dtype=float)
    b, width = Ztilde.shape
    recon = float(np.sum((Zrecon - Ztilde) ** 2) * _recon_scale(b, width, reduction))
    kl = float(0.5 * np.sum(np.exp(logvar) + mu**2 - 1.0 - logvar) / b)
    return recon + kl, recon, kl


def _bce(p, labels, weights=None):
    p = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    terms = -(labels * np.log(p) + (1 - labels) * np.log1p(-p))
    if weights is None:
        return float(np.mean(terms))
    return float(np.sum(weights * terms) / np.sum(weights))


def disc_loss(model: ProEmbModel, Zhat, labels, weights=None) -> float:
    """Binary cross-entropy of the discriminator against binary labels."""
    labels = np.asarray(labels, dtype=float).ravel()
    if not np.isin(labels, (0.0, 1.0)).all():
        raise ValueError("discriminator labels must be binary")
    p = model.discriminator.predict(Zhat).ravel()
    return _bce(p, labels, weights)


def balance_loss(model: ProEmbModel, Zhat) -> float:
    p = model.discriminator.predict(Zhat).ravel()
    return float(np.mean((p - 0.5) ** 2))


# -- gradients -----------------------------------------------------------------

def _backprop_latent(model, cache, d_mu, d_logvar):
    """Push gradients at (mu, logvar) back through the heads into the encoder."""
    c_enc, c_mu, c_lv, lv_raw = cache
    clip = model.logvar_clip
    d_lv_raw = d_logvar * ((lv_raw > -clip) & (lv_raw < clip))
    g_mu, dh1 = model.mu_head.backward(c_mu, d_mu)
    g_lv, dh2 = model.logvar_head.backward(c_lv, d_lv_raw)
    g_enc, _ = model.encoder.backward(c_enc, dh1 + dh2, input_grad=False)
    return g_enc + g_mu + g_lv


def vae_gradients(model: ProEmbModel, X, eta, reduction: str = "sum"):
    """VAE loss terms and gradients for encoder, heads and decoder (in that order).

    ``eta`` is the frozen reparameterization noise. Also returns the sampled code.
    """
    b, width = X.shape
    mu, logvar, cache = _encode(model, X)
    std = np.exp(0.5 * logvar)
    zhat = mu + std * eta
    recon_x, c_dec = model.decoder.forward(zhat)
    total, recon, kl = vae_loss(X, recon_x, mu, logvar, reduction)
    d_recon = 2.0 * (recon_x - X) * _recon_scale(b, width, reduction)
    g_dec, d_z = model.decoder.backward(c_dec, d_recon)
    d_mu = d_z + mu / b
    d_logvar = d_z * eta * std * 0.5 + 0.5 * (np.exp(logvar) - 1.0) / b
    grads = _backprop_latent(model, cache, d_mu, d_logvar) + g_dec
    return (total, recon, kl), grads, zhat


def disc_gradients(model: ProEmbModel, Zhat, labels, weights=None):
    labels = np.asarray(labels, dtype=float).reshape(-1, 1)
    b = labels.shape[0]
    p, cache = model.discriminator.forward(Zhat)
    w = np.ones_like(labels) if weights is None else np.asarray(weights, dtype=float).reshape(-1, 1)
    loss = _bce(p.ravel(), labels.ravel(), w.ravel())
    # d/dlogit of weighted-mean BCE
    d_logit = w * (p - labels) / w.sum()
    grads, _ = model.discriminator.backward(cache, d_logit, input_grad=False, preactivation=True)
    return loss, grads


def balance_gradients(model: ProEmbModel, X, eta, weight: float = 1.0):
    """``weight * mean((D(z) - 0.5)^2)`` and its gradients for encoder and heads only."""
    b = X.shape[0]
    mu, logvar, cache = _encode(model, X)
    std = np.exp(0.5 * logvar)
    zhat = mu + std * eta
    p, c_disc = model.discriminator.forward(zhat)
    loss = float(np.mean((p - 0.5) ** 2))
    d_p = weight * 2.0 * (p - 0.5) / b
    _, d_z = model.discriminator.backward(c_disc, d_p)
    d_mu = d_z
    d_logvar = d_z * eta * std * 0.5
    return weight * loss, _backprop_latent(model, cache, d_mu, d_logvar)


# -- training ------------------------------------------------------------------

@dataclass
class TrainTrace:
    vae_loss: list = field(default_factory=list)
    recon: list = field(default_factory=list)
    kl: list = field(default_factory=list)
    disc_loss: list = field(default_factory=list)
    balance_loss: list = field(default_factory=list)
    heldout_vae_loss: list = field(default_factory=list)
    heldout_balance: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _class_weights(labels):
    p1 = labels.mean()
    return np.where(labels == 1, 0.5 / p1, 0.5 / (1.0 - p1))


def _evaluate(model, X, labels, reduction):
    mu, logvar = encode(model, X)
    total, _, _ = vae_loss(X, decode(model, mu), mu, logvar, reduction)
    dev = np.abs(model.discriminator.predict(mu).ravel() - 0.5)
    return total, float(dev.mean()) if labels is not None else float("nan")


def train(model: ProEmbModel, Ztilde, treat, config: TrainConfig, rng, y_prev=None):
    """Fit ``model`` in place on raw proxies ``Ztilde``; returns ``(model, trace)``.

    ``trace`` index 0 of the held-out series is measured before any update;
    later entries follow each epoch.
    """
    from .numerics import RngStream

    if not isinstance(rng, RngStream):
        rng = RngStream(int(as_generator(rng).integers(2**63)))
    Ztilde = np.asarray(Ztilde, dtype=float)
    n = Ztilde.shape[0]
    if Ztilde.shape[1] != model.input_dim:
        raise ValueError(f"model expects width {model.input_dim}, got {Ztilde.shape[1]}")
    labels_all = np.asarray(treat if config.disc_label == "treat" else y_prev, dtype=float)
    if labels_all.shape != (n,):
        raise ValueError("need one discriminator label per node")

    model.standardizer = Standardizer(config.scaling).fit(Ztilde)
    X_all = model.standardizer.transform(Ztilde)

    n_hold = int(round(config.holdout * n))
    perm = rng.spawn("holdout").generator.permutation(n)
    hold, fit = np.sort(perm[:n_hold]), np.sort(perm[n_hold:])
    X, labels = X_all[fit], labels_all[fit]
    X_hold, labels_hold = X_all[hold], labels_all[hold]

    adversarial = config.adversarial
    if adversarial and labels.min() == labels.max():
        warnings.warn("all nodes share one discriminator label; skipping discriminator and balance steps")
        adversarial = False
    weights = _class_weights(labels) if (adversarial and config.balanced_disc) else None

    opt_vae = AdamState(sum((net.params() for net in model.vae_nets()), []), lr=config.lr)
    opt_disc = AdamState(model.discriminator.params(), lr=config.lr)
    opt_bal = AdamState(sum((net.params() for net in model.encoder_nets()), []), lr=config.lr)
    shuffle_rng = rng.spawn("shuffle")
    noise = rng.spawn("noise").generator

    trace = TrainTrace()
    if n_hold:
        h_loss, h_bal = _evaluate(model, X_hold, labels_hold if adversarial else None, config.recon_reduction)
        trace.heldout_vae_loss.append(h_loss)
        trace.heldout_balance.append(h_bal)

    for epoch in range(config.epochs):
        sums = np.zeros(5)
        nb = 0
        for idx in minibatches(X.shape[0], config.batch, shuffle_rng):
            xb = X[idx]
            eta = noise.standard_normal((len(idx), model.d))
            (total, recon, kl), grads, zhat = vae_gradients(model, xb, eta, config.recon_reduction)
            adam_step(model.vae_nets(), grads, opt_vae)
            d_l = b_l = 0.0
            if adversarial:
                w = None if weights is None else weights[idx]
                d_l, g_disc = disc_gradients(model, zhat, labels[idx], w)
                adam_step(model.discriminator, g_disc, opt_disc)
                if config.lambda_rb > 0:
                    b_l, g_bal = balance_gradients(model, xb, eta, config.lambda_rb)
                    adam_step(model.encoder_nets(), g_bal, opt_bal)
            sums += (total, recon, kl, d_l, b_l)
            nb += 1
        sums /= nb
        trace.vae_loss.append(sums[0])
        trace.recon.append(sums[1])
        trace.kl.append(sums[2])
        trace.disc_loss.append(sums[3])
        trace.balance_loss.append(sums[4])
        if n_hold:
            h_loss, h_bal = _evaluate(model, X_hold, labels_hold if adversarial else None, config.recon_reduction)
            trace.heldout_vae_loss.append(h_loss)
            trace.heldout_balance.append(h_bal)
        log.debug("epoch %d vae %.4f disc %.4f bal %.4f", epoch, *sums[[0, 3, 4]])

    model.trained = True
    return model, trace


def embed(model: ProEmbModel, Ztilde, sample: bool = False, rng=None) -> np.ndarray:
    """Latent codes for raw proxies: the posterior mean, or a draw if ``sample``."""
    if not model.trained or model.standardizer is None:
        raise RuntimeError("model has not been trained")
    X = model.standardizer.transform(Ztilde)
    mu, logvar = encode(model, X)
    if sample:
        return sample_latent(mu, logvar, rng)
    return mu


def discriminator_output(model: ProEmbModel, Zhat) -> np.ndarray:
    return model.discriminator.predict(Zhat).ravel()


__all__ = [
    "TrainConfig", "ProEmbModel", "Standardizer", "encode", "sample_latent", "decode",
    "vae_loss", "disc_loss", "balance_loss", "vae_gradients", "disc_gradients",
    "balance_gradients", "train", "embed", "TrainTrace",
]
