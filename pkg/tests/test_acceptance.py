"""Acceptance criteria, one test per criterion, each logging a PASS/FAIL line.

The desk-scale experiments (criteria 4-6) take roughly 25 minutes on one core.
"""

import itertools
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from gradcheck import check
from proemb import simdata
from proemb.cli import main
from proemb.embedding import ProEmbModel, TrainConfig, disc_gradients, disc_loss, encode, decode
from proemb.embedding import sample_latent, train, vae_gradients, vae_loss
from proemb.estimators import BaseLearnerSpec, MlpRegressor, estimate_ace, fit_ols, fit_tlearner, fit_tsls
from proemb.graphgen import gen_dyads, gen_homophily_ba
from proemb.harness import ExperimentConfig, render_markdown, run_experiment, sweep_embedding_dim
from proemb.neural import mse_loss
from proemb.numerics import RngStream, cosine_matrix, sample_gaussian, solve_least_squares

DESK_SETTINGS = {
    "h=max, beta_u~N(0,3)": dict(h="max"),
    "h=mean, beta_u~N(0,3)": dict(h="mean"),
    "h=max, beta_u~N(5,2)": dict(beta_u_mean=5.0, beta_u_std=2.0),
}
SWEEP_DIMS = [20, 100, 500, 2000]


@pytest.fixture(scope="module")
def desk():
    start = time.perf_counter()
    tables = {name: run_experiment(ExperimentConfig(**kw)) for name, kw in DESK_SETTINGS.items()}
    for t in tables.values():
        print(render_markdown(t))
    return tables, time.perf_counter() - start


@pytest.fixture(scope="module")
def sweep():
    return sweep_embedding_dim(ExperimentConfig(methods=("PE-GB",)), SWEEP_DIMS)


def test_criterion_1_gradient_integrity(record):
    start = time.perf_counter()
    g = RngStream(0, "gradcheck").generator
    errors = {}

    # encoder + heads + decoder at full widths, reparameterization noise frozen
    V, d, b = 5, 4, 8
    model = ProEmbModel.build(2 * V, d, RngStream(1))
    X = g.normal(size=(b, 2 * V))
    eta = g.normal(size=(b, d))

    def vae():
        mu, lv = encode(model, X)
        return vae_loss(X, decode(model, sample_latent(mu, lv, eta=eta)), mu, lv)[0]

    _, grads, _ = vae_gradients(model, X, eta)
    params = sum((n.params() for n in model.vae_nets()), [])
    errors["vae"] = check(vae, params, grads, max_per_tensor=60, rng=g)

    z = g.normal(size=(b, d))
    labels = g.integers(0, 2, b)
    _, grads = disc_gradients(model, z, labels)
    errors["discriminator"] = check(lambda: disc_loss(model, z, labels), model.discriminator.params(),
                                    grads, max_per_tensor=60, rng=g)

    mlp = MlpRegressor(epochs=1, rng=RngStream(2)).fit(g.normal(size=(64, d)), g.normal(size=64))
    Xm = g.normal(size=(b, d))
    ym = g.normal(size=(b, 1))
    out, cache = mlp.net_.forward(Xm)
    grads, _ = mlp.net_.backward(cache, mse_loss(out, ym)[1])
    errors["mlp"] = check(lambda: mse_loss(mlp.net_.predict(Xm), ym)[0], mlp.net_.params(), grads,
                          max_per_tensor=60, rng=g)

    elapsed = time.perf_counter() - start
    ok = max(errors.values()) < 1e-4 and elapsed < 30
    detail = ", ".join(f"{k} {v:.1e}" for k, v in errors.items())
    record(1, ok, f"max relative error {detail}; {elapsed:.1f}s")
    assert ok


def test_criterion_2_estimator_oracles(record):
    g = RngStream(0, "oracles").generator
    n = 50
    u = g.normal(size=n)
    Zngb = g.normal(size=(n, 2)) + u[:, None]
    Z = Zngb @ g.normal(size=(2, 2)) + u[:, None] + 0.5 * g.normal(size=(n, 2))
    T = (g.random(n) < 0.5).astype(float)
    y = T + u + 0.3 * g.normal(size=n)
    W = np.column_stack([np.ones(n), T, Zngb])
    Xh = np.column_stack([np.ones(n), W @ np.linalg.inv(W.T @ W) @ W.T @ np.column_stack([T, Z])])
    oracle = (np.linalg.inv(Xh.T @ Xh) @ Xh.T @ y)[1]
    tsls_err = abs(fit_tsls(y, T, Z, Zngb).theta_hat - oracle)

    ls_err = 0.0
    for _ in range(10):
        X = g.normal(size=(20, 5))
        yy = g.normal(size=20)
        ls_err = max(ls_err, np.max(np.abs(solve_least_squares(X, yy) - np.linalg.inv(X.T @ X) @ X.T @ yy)))

    empty = np.zeros((n, 0))
    collapse_err = abs(fit_tsls(y, T, empty, empty).theta_hat - fit_ols(y, T))
    ok = tsls_err < 1e-8 and ls_err < 1e-10 and collapse_err < 1e-10
    record(2, ok, f"TSLS vs oracle {tsls_err:.1e}, lstsq vs normal equations {ls_err:.1e}, "
                  f"TSLS vs OLS {collapse_err:.1e}")
    assert ok


def _recovery_panel(noise_std, seed=0, n=2000, d=20):
    r = RngStream(seed, "recovery")
    U = simdata.gen_confounders(n, d, r.spawn("U"))
    T = r.spawn("T").generator.permutation(np.repeat([0, 1], n // 2))
    beta = sample_gaussian(r.spawn("beta"), 0.0, 3.0, d)
    o = simdata.gen_outcomes(U, np.zeros(n, dtype=int), T, beta, beta_y=0.0, tau=1.0,
                             rng=r.spawn("y"), noise_std=noise_std)
    return U.U, T, o.y_fact


def test_criterion_3_noiseless_recovery(record):
    spec = BaseLearnerSpec.linear(0.0)
    U, T, y = _recovery_panel(0.0)
    clean = abs(estimate_ace(fit_tlearner(U, T, y, spec), U).ace_hat - 1.0)
    U, T, y = _recovery_panel(1.0)
    noisy = abs(estimate_ace(fit_tlearner(U, T, y, spec), U).ace_hat - 1.0)
    ok = clean < 1e-6 and noisy < 0.05
    record(3, ok, f"noiseless |ace-tau| {clean:.1e} (< 1e-6), N(0,1) noise n=2000 |ace-tau| "
                  f"{noisy:.4f} (< 0.05)")
    assert ok


def test_criterion_4_table_ordering(desk, record):
    tables, elapsed = desk
    parts, ok = [], elapsed < 30 * 60
    for i, (name, t) in enumerate(tables.items()):
        s = t.settings[0]
        pe, tg, ts = (t.cell(m, s) for m in ("PE-GB", "T-GB", "TSLS"))
        cond = pe["rmse"] < ts["rmse"]
        if i == 0:
            cond = cond and pe["rmse"] < tg["rmse"] and ts["std"] >= 2 * pe["std"]
        ok = ok and cond and all(c["n_ok"] == t.runs for c in (pe, tg, ts))
        parts.append(f"[{name}] PE-GB {pe['rmse']:.3f}±{pe['std']:.3f}, T-GB {tg['rmse']:.3f}"
                     f"±{tg['std']:.3f}, TSLS {ts['rmse']:.3f}±{ts['std']:.3f}")
    record(4, ok, "; ".join(parts) + f"; {elapsed / 60:.1f} min")
    assert ok


def test_criterion_5_dimension_sweep(sweep, record):
    err = {x: np.abs(np.array(sweep.per_run("PE-GB", f"d={x}"), dtype=float) - sweep.tau) for x in SWEEP_DIMS}
    dims = np.repeat(SWEEP_DIMS, sweep.runs)
    rho = spearmanr(dims, np.concatenate([err[x] for x in SWEEP_DIMS])).statistic
    wins = int(np.sum(err[20] <= err[2000]))
    ok = rho > 0 and wins >= 7
    rmses = ", ".join(f"d={x} {sweep.cell('PE-GB', f'd={x}')['rmse']:.3f}" for x in SWEEP_DIMS)
    record(5, ok, f"Spearman {rho:.3f}, error(20) <= error(2000) in {wins}/10 seeds; RMSE {rmses}")
    assert ok


def _plain_vs_zero_lambda():
    r = RngStream(0, "ablation")
    U = simdata.gen_confounders(300, 5, r.spawn("U"))
    G = gen_homophily_ba(U, 3, 3, r.spawn("G"))
    P = simdata.gen_proxies(U, G, 100, 30, r.spawn("Z"))
    treat = r.spawn("T").generator.integers(0, 2, 300)
    params = []
    for cfg in (TrainConfig(d=5, epochs=5, lambda_rb=0.0), TrainConfig(d=5, epochs=5, adversarial=False)):
        m = ProEmbModel.build(200, 5, RngStream(1))
        train(m, P.Ztilde, treat, cfg, RngStream(2))
        params.append(sum((n.params() for n in m.vae_nets()), []))
    return all(np.array_equal(a, b) for a, b in zip(*params))


def test_criterion_6_balance(desk, sweep, record):
    tables, _ = desk
    diags = [d for t in tables.values() for s in t.settings for d in t.diagnostics[s]]
    diags += [d for s in sweep.settings for d in sweep.diagnostics[s]]
    held = [d["heldout_balance_end"] <= d["heldout_balance_start"] for d in diags]
    identical = _plain_vs_zero_lambda()
    ok = all(held) and len(held) == 70 and identical
    record(6, ok, f"held-out |D-0.5| did not grow in {sum(held)}/{len(held)} runs; "
                  f"lambda_rb=0 bit-identical to plain VAE: {identical}")
    assert ok


def test_criterion_7_simulation_invariants(record):
    checks = {}
    r = RngStream(0, "invariants")
    U = simdata.gen_confounders(400, 10, r.spawn("U"))
    treat = r.spawn("T").generator.integers(0, 2, 400)
    o = simdata.gen_outcomes(U, r.spawn("y").generator.integers(0, 2, 400), treat,
                             sample_gaussian(r.spawn("b"), 0, 3, 10), tau=1.0, rng=r.spawn("o"))
    checks["shared noise"] = bool(np.all(np.abs(o.y_fact - o.y_cf) == 1.0)) and bool(
        np.all(np.sign(o.y_fact - o.y_cf) == 2 * treat - 1))

    counts = True
    for n, m0, m in [(400, 3, 3), (101, 5, 2), (50, 1, 1), (30, 4, 4)]:
        Ug = simdata.gen_confounders(n, 6, r.spawn(f"g{n}"))
        counts &= gen_homophily_ba(Ug, m0, m, r.spawn(f"ba{n}")).n_edges == m0 * (m0 - 1) // 2 + m * (n - m0)
    counts &= gen_dyads(U, r.spawn("dyads")).n_edges == 200
    checks["edge counts"] = bool(counts)

    gaps = []
    for s in range(20):
        Us = simdata.gen_confounders(300, 20, RngStream(s, "homophily").spawn("U")).U
        G = gen_homophily_ba(Us, 3, 3, RngStream(s, "homophily").spawn("G"))
        C = cosine_matrix(Us)
        e = G.edges()
        adj = np.zeros((300, 300), dtype=bool)
        adj[e[:, 0], e[:, 1]] = adj[e[:, 1], e[:, 0]] = True
        pool = np.array([(i, j) for i in range(300) for j in range(i + 1, 300) if not adj[i, j]])
        pick = pool[RngStream(s, "homophily").spawn("non").generator.choice(len(pool), len(e), replace=False)]
        gaps.append(C[e[:, 0], e[:, 1]].mean() - C[pick[:, 0], pick[:, 1]].mean())
    gaps = np.array(gaps)
    z = gaps.mean() / (gaps.std(ddof=1) / np.sqrt(len(gaps)))
    checks["homophily gap"] = bool(z > 3)

    dominance = all(simdata.h_max(v) >= simdata.h_mean(v)
                    for k in range(1, 11) for v in itertools.product([0, 1], repeat=k))
    checks["h_max >= h_mean"] = dominance

    ok = all(checks.values())
    record(7, ok, ", ".join(f"{k}: {v}" for k, v in checks.items()) + f" (gap z = {z:.1f})")
    assert ok


def test_criterion_8_determinism(tmp_path, record):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("n = 300\nV = 200\nd = 5\nruns = 2\nepochs = 3\nseed = 17\n"
                   "methods = oracle, zero, OLS, TSLS, T-LR, T-GB, T-NN, PE-LR, PE-GB, PE-NN\n")
    for out in ("a", "b"):
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / out)]) == 0
    same = (tmp_path / "a" / "table.json").read_bytes() == (tmp_path / "b" / "table.json").read_bytes()
    record(8, same, f"two runs with seed 17 give byte-identical table.json: {same}")
    assert same
