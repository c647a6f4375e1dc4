"""Experiment orchestration: config -> seeded runs -> RMSE tables -> exports."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import graphgen, simdata
from .embedding import TrainConfig, embed, train, ProEmbModel
from .estimators import (
    BaseLearnerSpec,
    config_digest,
    estimate_ace,
    fit_naive_tlearner,
    fit_ols,
    fit_tlearner,
    fit_tsls,
)
from .numerics import RngStream, sample_gaussian

log = logging.getLogger(__name__)

LEARNERS = {"LR": BaseLearnerSpec.linear, "GB": BaseLearnerSpec.boosted, "NN": BaseLearnerSpec.mlp}
METHODS = ("oracle", "zero", "OLS", "TSLS") + tuple(
    f"{fam}-{base}" for fam in ("T", "PE") for base in LEARNERS
)


@dataclass
class ExperimentConfig:
    n: int = 2000
    d: int = 20
    V: int = 2000
    doc_len: int = 50
    graph: str = "ba"  # ba | dyadic
    m0: int = 3
    m: int = 3
    h: str = "max"
    tau: float = 1.0
    beta_y: float = 0.2
    beta_u_mean: float = 0.0
    beta_u_std: float = 3.0
    alpha_u_std: float = 1.0
    peer_p: float = 0.3
    runs: int = 10
    methods: tuple = ("TSLS", "T-GB", "PE-GB")
    dims: tuple = (20,)
    seed: int = 0
    epochs: int = 50
    lr: float = 1e-3
    batch: int = 128
    lambda_rb: float = 1.0

    def __post_init__(self):
        self.methods = tuple(self.methods)
        self.dims = tuple(int(x) for x in self.dims)
        if self.runs < 1:
            raise ValueError("need at least one run")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
        if not self.methods:
            raise ValueError("method list is empty")
        if any(x < 1 for x in self.dims):
            raise ValueError("sweep dims must be at least 1")
        if self.graph not in ("ba", "dyadic"):
            raise ValueError(f"unknown graph model {self.graph!r}")
        if self.h not in simdata.AGGREGATORS:
            raise ValueError(f"unknown aggregator {self.h!r}")
        if self.graph == "dyadic" and self.n % 2:
            raise ValueError("dyadic graphs need an even number of nodes")

    @property
    def setting(self) -> str:
        """Short label of the data-generating setting."""
        return f"h={self.h},beta_u=N({self.beta_u_mean:g},{self.beta_u_std:g})"

    def to_dict(self) -> dict:
        out = asdict(self)
        out["methods"] = list(self.methods)
        out["dims"] = list(self.dims)
        return out

    def digest(self) -> str:
        return config_digest(self.to_dict())

    def train_config(self, d: int | None = None) -> TrainConfig:
        return TrainConfig(d=d or self.d, lr=self.lr, epochs=self.epochs, batch=self.batch,
                           lambda_rb=self.lambda_rb)


# -- flat key = value config files ------------------------------------------

def _coerce(name: str, raw):
    kinds = {f.name: f.type for f in fields(ExperimentConfig)}
    if name not in kinds:
        raise KeyError(f"unknown config key {name!r}")
    if not isinstance(raw, str):
        return raw
    kind = kinds[name]
    raw = raw.strip()
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "tuple":
        items = [x.strip() for x in raw.split(",") if x.strip()]
        return tuple(int(x) for x in items) if name == "dims" else tuple(items)
    return raw


def parse_config_text(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment; lists are comma separated."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = _coerce(key, value)
    return out


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    values = parse_config_text(Path(path).read_text()) if path else {}
    for key, value in (overrides or {}).items():
        values[key] = _coerce(key, value)
    return ExperimentConfig(**values)


def dump_config(config: ExperimentConfig) -> str:
    lines = []
    for key, value in config.to_dict().items():
        if isinstance(value, list):
            value = ",".join(map(str, value))
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


# -- data generation ----------------------------------------------------------

@dataclass
class RunData:
    run: int
    U: simdata.ConfounderSet
    graph: graphgen.EgoNetwork
    proxies: simdata.ProxyPanel
    outcomes: simdata.OutcomePanel

    @property
    def digest(self) -> str:
        return simdata.panel_digest(self.proxies, self.outcomes, self.graph)


def run_stream(config: ExperimentConfig, run: int) -> RngStream:
    return RngStream(config.seed, run)


def generate_run(config: ExperimentConfig, run: int) -> RunData:
    rng = run_stream(config, run)
    U = simdata.gen_confounders(config.n, config.d, rng.spawn("confounders"))
    if config.graph == "dyadic":
        G = graphgen.gen_dyads(U.U, rng.spawn("graph"))
    else:
        G = graphgen.gen_homophily_ba(U.U, config.m0, config.m, rng.spawn("graph"))
    alpha_u = sample_gaussian(rng.spawn("alpha_u"), 0.0, config.alpha_u_std, config.d)
    beta_u = sample_gaussian(rng.spawn("beta_u"), config.beta_u_mean, config.beta_u_std, config.d)
    y_prev = simdata.gen_baseline_activation(U.U, alpha_u, rng.spawn("y_prev"))
    y_prev = simdata.apply_peer_activation(G, y_prev, config.peer_p, rng.spawn("peer"))
    treat = simdata.compute_treatment(G, y_prev, config.h)
    proxies = simdata.gen_proxies(U.U, G, config.V, config.doc_len, rng.spawn("proxies"))
    outcomes = simdata.gen_outcomes(U.U, y_prev, treat, beta_u, config.beta_y, config.tau,
                                    rng.spawn("outcomes"), alpha_u=alpha_u)
    return RunData(run, U, G, proxies, outcomes)


# -- methods --------------------------------------------------------------------

def _split(method: str):
    fam, _, base = method.partition("-")
    return fam, base


def fit_embedding(config: ExperimentConfig, data: RunData, d: int):
    """Train ProEmb on one panel; the stream is shared across dims for pairing."""
    rng = run_stream(config, data.run).spawn("proemb")
    model = ProEmbModel.build(2 * config.V, d, rng.spawn("init"))
    model, trace = train(model, data.proxies.Ztilde, data.outcomes.treat, config.train_config(d),
                         rng.spawn("train"), y_prev=data.outcomes.y_prev)
    return embed(model, data.proxies.Ztilde), trace


def estimate(method: str, config: ExperimentConfig, data: RunData, embedding=None) -> float:
    """Contagion-effect estimate of one method on one panel."""
    out = data.outcomes
    y, T = out.y_fact, out.treat
    mrng = run_stream(config, data.run).spawn(f"method:{method}")
    if method == "oracle":
        return float(np.mean(np.where(T == 1, y - out.y_cf, out.y_cf - y)))
    if method == "zero":
        return 0.0
    if method == "OLS":
        return fit_ols(y, T)
    if method == "TSLS":
        return fit_tsls(y, T, data.proxies.Z, data.proxies.Zngb).theta_hat
    fam, base = _split(method)
    spec = LEARNERS[base]()
    if fam == "T":
        return fit_naive_tlearner(data.proxies.Ztilde, T, y, spec, mrng).ace_hat
    if embedding is None:
        raise ValueError(f"{method} needs an embedding")
    return estimate_ace(fit_tlearner(embedding, T, y, spec, mrng), embedding).ace_hat


# -- tables -----------------------------------------------------------------------

def _summary(estimates: list, tau: float) -> dict:
    ok = np.array([e for e in estimates if e is not None], dtype=float)
    if ok.size == 0:
        return {"rmse": None, "mean": None, "std": None, "n_ok": 0}
    return {
        "rmse": float(np.sqrt(np.mean((ok - tau) ** 2))),
        "mean": float(ok.mean()),
        "std": float(ok.std()),
        "n_ok": int(ok.size),
    }


@dataclass
class RmseTable:
    """Per (method, setting): RMSE, mean, across-run std and the per-run estimates.

    ``std`` is the standard deviation of the estimates themselves. Failed
    runs are stored as ``None`` and excluded from the summaries; ``n_ok``
    below ``runs`` flags them.
    """

    tau: float
    runs: int
    methods: list
    settings: list
    estimates: dict = field(default_factory=dict)  # "method|setting" -> list
    digests: dict = field(default_factory=dict)  # setting -> per-run panel digests
    diagnostics: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @staticmethod
    def key(method: str, setting: str) -> str:
        return f"{method}|{setting}"

    def add(self, method: str, setting: str, values: list) -> None:
        if method not in self.methods:
            self.methods.append(method)
        if setting not in self.settings:
            self.settings.append(setting)
        self.estimates[self.key(method, setting)] = list(values)

    def cell(self, method: str, setting: str) -> dict:
        return _summary(self.estimates[self.key(method, setting)], self.tau)

    def per_run(self, method: str, setting: str) -> list:
        return self.estimates[self.key(method, setting)]

    def merge(self, other: "RmseTable") -> "RmseTable":
        if other.tau != self.tau or other.runs != self.runs:
            raise ValueError("tables disagree on tau or run count")
        for k, v in other.estimates.items():
            m, s = k.split("|", 1)
            self.add(m, s, v)
        self.digests.update(other.digests)
        self.diagnostics.update(other.diagnostics)
        self.errors.update(other.errors)
        self.config.update(other.config)
        return self

    def to_dict(self) -> dict:
        cells = {}
        for m in self.methods:
            for s in self.settings:
                k = self.key(m, s)
                if k in self.estimates:
                    cells[k] = {**self.cell(m, s), "estimates": self.estimates[k]}
        return {
            "tau": self.tau,
            "runs": self.runs,
            "methods": self.methods,
            "settings": self.settings,
            "cells": cells,
            "digests": self.digests,
            "diagnostics": self.diagnostics,
            "errors": self.errors,
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, blob: dict) -> "RmseTable":
        t = cls(blob["tau"], blob["runs"], list(blob["methods"]), list(blob["settings"]))
        t.estimates = {k: list(v["estimates"]) for k, v in blob["cells"].items()}
        t.digests = blob.get("digests", {})
        t.diagnostics = blob.get("diagnostics", {})
        t.errors = blob.get("errors", {})
        t.config = blob.get("config", {})
        return t


def _run_methods(config, data, methods, embedding, errors, setting):
    out = {}
    for method in methods:
        fam, _ = _split(method)
        try:
            if fam == "PE" and embedding is None:
                raise RuntimeError("embedding training failed")
            out[method] = estimate(method, config, data, embedding if fam == "PE" else None)
        except Exception as exc:  # recorded per run, the table marks the gap
            log.warning("run %d %s failed: %s", data.run, method, exc)
            errors.setdefault(RmseTable.key(method, setting), {})[str(data.run)] = repr(exc)
            out[method] = None
    return out


def _balance_diag(trace) -> dict:
    hb = [None if np.isnan(v) else v for v in trace.heldout_balance]
    return {"heldout_balance_start": hb[0], "heldout_balance_end": hb[-1]} if hb else {}


def run_experiment(config: ExperimentConfig) -> RmseTable:
    """All configured methods on ``config.runs`` seeded panels of one setting."""
    setting = config.setting
    table = RmseTable(config.tau, config.runs, [], [setting], config={setting: config.to_dict()})
    per_method = {m: [] for m in config.methods}
    digests, diags = [], []
    needs_pe = any(_split(m)[0] == "PE" for m in config.methods)
    for run in range(config.runs):
        data = generate_run(config, run)
        digests.append(data.digest)
        emb, diag = None, {}
        if needs_pe:
            try:
                emb, trace = fit_embedding(config, data, config.d)
                diag = _balance_diag(trace)
            except Exception as exc:
                log.warning("run %d embedding failed: %s", run, exc)
        diags.append(diag)
        for m, v in _run_methods(config, data, config.methods, emb, table.errors, setting).items():
            per_method[m].append(v)
        log.info("run %d done: %s", run, per_method)
    for m in config.methods:
        table.add(m, setting, per_method[m])
    table.digests[setting] = digests
    table.diagnostics[setting] = diags
    return table


def sweep_embedding_dim(config: ExperimentConfig, dims=None) -> RmseTable:
    """Retrain ProEmb at each dim on the same panels (paired across dims).

    Only the ``PE-*`` methods of the config are run; settings are ``d=<dim>``.
    """
    dims = [int(x) for x in (dims if dims is not None else config.dims)]
    if not dims:
        raise ValueError("need at least one embedding dimension")
    for x in dims:
        if x < 1 or x > 2 * config.V:
            raise ValueError(f"embedding dim {x} is outside [1, 2V={2 * config.V}]")
    methods = [m for m in config.methods if _split(m)[0] == "PE"] or ["PE-GB"]
    table = RmseTable(config.tau, config.runs, [], [], config={"sweep": config.to_dict()})
    est = {(m, x): [] for m in methods for x in dims}
    for x in dims:
        table.digests[f"d={x}"] = []
        table.diagnostics[f"d={x}"] = []
    for run in range(config.runs):
        data = generate_run(config, run)
        for x in dims:
            setting = f"d={x}"
            table.digests[setting].append(data.digest)
            emb, diag = None, {}
            try:
                emb, trace = fit_embedding(config, data, x)
                diag = _balance_diag(trace)
            except Exception as exc:
                log.warning("run %d dim %d embedding failed: %s", run, x, exc)
            table.diagnostics[setting].append(diag)
            for m, v in _run_methods(config, data, methods, emb, table.errors, setting).items():
                est[(m, x)].append(v)
    for m in methods:
        for x in dims:
            table.add(m, f"d={x}", est[(m, x)])
    return table


# -- reports ------------------------------------------------------------------------

def _fmt(v, spec=".4f"):
    return "n/a" if v is None else format(v, spec)


def render_json(table: RmseTable) -> str:
    return json.dumps(table.to_dict(), indent=2, sort_keys=True) + "\n"


def render_csv(table: RmseTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "setting", "rmse", "mean", "std", "n_ok", "runs", "estimates"])
    for m in table.methods:
        for s in table.settings:
            k = table.key(m, s)
            if k not in table.estimates:
                continue
            c = table.cell(m, s)
            ests = ";".join("" if e is None else repr(e) for e in table.estimates[k])
            w.writerow([m, s, c["rmse"], c["mean"], c["std"], c["n_ok"], table.runs, ests])
    return buf.getvalue()


def render_markdown(table: RmseTable) -> str:
    """Columns: method, family, base learner, successful runs, then one per setting."""
    head = ["method", "family", "base", "ok runs", *table.settings]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for m in table.methods:
        fam, base = _split(m)
        cells, oks = [], []
        for s in table.settings:
            k = table.key(m, s)
            if k not in table.estimates:
                cells.append("")
                continue
            c = table.cell(m, s)
            oks.append(c["n_ok"])
            flag = "" if c["n_ok"] == table.runs else " *"
            cells.append(f"{_fmt(c['rmse'])} ({_fmt(c['mean'], '.2f')} ± {_fmt(c['std'], '.2f')}){flag}")
        ok = f"{min(oks)}/{table.runs}" if oks else f"0/{table.runs}"
        row = [m, fam if base else "baseline", base or "-", ok, *cells]
        lines.append("| " + " | ".join(row) + " |")
    lines.append("")
    lines.append(f"RMSE (mean ± std of estimates) over {table.runs} runs, true effect {table.tau:g}. "
                 "* marks cells with failed runs.")
    return "\n".join(lines) + "\n"


RENDERERS = {"json": render_json, "csv": render_csv, "markdown": render_markdown, "md": render_markdown}


def report(table: RmseTable, fmt: str, path) -> Path:
    if fmt not in RENDERERS:
        raise ValueError(f"unknown report format {fmt!r}")
    path = Path(path)
    path.write_text(RENDERERS[fmt](table))
    return path


def load_table(path) -> RmseTable:
    return RmseTable.from_dict(json.loads(Path(path).read_text()))


def jensen_holds(table: RmseTable, slack: float = 1e-12) -> bool:
    """RMSE is never below the absolute mean bias."""
    for m in table.methods:
        for s in table.settings:
            if table.key(m, s) not in table.estimates:
                continue
            c = table.cell(m, s)
            if c["rmse"] is not None and c["rmse"] + slack < abs(c["mean"] - table.tau):
                return False
    return True
