"""Command-line entry point: ``proemb {generate,estimate,run,sweep,report}``.

Every config key can be overridden with ``--key value``; the master seed
comes from ``--seed``, else ``PROEMB_SEED``, else the config file.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import graphgen, simdata
from .harness import (
    METHODS,
    RENDERERS,
    RunData,
    dump_config,
    estimate,
    fit_embedding,
    generate_run,
    load_config,
    load_table,
    report,
    run_experiment,
    sweep_embedding_dim,
)


def _overrides(extra: list[str]) -> dict:
    out = {}
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--"):
            raise SystemExit(f"unexpected argument {tok!r}")
        key = tok[2:].replace("-", "_")
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            try:
                value = next(it)
            except StopIteration:
                raise SystemExit(f"missing value for --{key}")
        out[key] = value
    return out


def _config(args, extra):
    overrides = _overrides(extra)
    if args.seed is not None:
        overrides["seed"] = args.seed
    elif "seed" not in overrides and os.environ.get("PROEMB_SEED"):
        overrides["seed"] = os.environ["PROEMB_SEED"]
    try:
        return load_config(args.config, overrides)
    except (KeyError, ValueError) as exc:
        raise SystemExit(f"bad config: {exc}")


def _write_tables(table, out: Path, config) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.lock").write_text(dump_config(config))
    report(table, "json", out / "table.json")
    report(table, "csv", out / "table.csv")
    report(table, "markdown", out / "table.md")


def cmd_generate(args, extra):
    config = _config(args, extra)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.lock").write_text(dump_config(config))
    for run in range(config.runs):
        data = generate_run(config, run)
        rd = out / f"run{run:03d}"
        rd.mkdir(exist_ok=True)
        graphgen.write_edge_list(data.graph, rd / "edges.csv")
        simdata.write_panel_jsonl(data.outcomes, rd / "panel.jsonl")
        simdata.write_proxies(data.proxies.Z, rd / "proxies.csv", sparse=True)
        (rd / "digest.txt").write_text(data.digest + "\n")
    print(f"wrote {config.runs} panel(s) to {out}")


def load_run(run_dir: Path, config, run: int = 0) -> RunData:
    """Rebuild a :class:`RunData` from the files written by ``generate``."""
    G = graphgen.read_edge_list(run_dir / "edges.csv", n=config.n, model=config.graph)
    outcomes = simdata.read_panel_jsonl(run_dir / "panel.jsonl", config.tau)
    Z = simdata.read_proxies(run_dir / "proxies.csv", n=config.n, V=config.V)
    proxies = simdata.ProxyPanel(Z=Z, Zngb=simdata.neighbor_mean(Z, G), topics=None)
    return RunData(run, None, G, proxies, outcomes)


def cmd_estimate(args, extra):
    config = _config(args, extra)
    run_dir = Path(args.panel)
    run = int(run_dir.name[3:]) if run_dir.name.startswith("run") else 0
    data = load_run(run_dir, config, run)
    emb = None
    if args.method.startswith("PE-"):
        emb, _ = fit_embedding(config, data, config.d)
    ace = estimate(args.method, config, data, emb)
    blob = {
        "method": args.method,
        "ace_hat": ace,
        "seed": config.seed,
        "n": config.n,
        "d_or_V": config.d if args.method.startswith("PE-") else config.V,
        "config_digest": config.digest(),
        "panel_digest": data.digest,
    }
    text = json.dumps(blob, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")


def cmd_run(args, extra):
    config = _config(args, extra)
    table = run_experiment(config)
    _write_tables(table, Path(args.out), config)
    print((Path(args.out) / "table.md").read_text(), end="")


def cmd_sweep(args, extra):
    config = _config(args, extra)
    table = sweep_embedding_dim(config, config.dims)
    _write_tables(table, Path(args.out), config)
    print((Path(args.out) / "table.md").read_text(), end="")


def cmd_report(args, extra):
    if extra:
        raise SystemExit(f"unexpected arguments {extra}")
    table = load_table(args.table)
    if args.out:
        report(table, args.format, args.out)
    else:
        print(RENDERERS[args.format](table), end="")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="proemb", description=__doc__.splitlines()[0], allow_abbrev=False)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--seed", type=int, help="master seed (overrides PROEMB_SEED)")
        return sp

    g = with_config(sub.add_parser("generate", allow_abbrev=False, help="write panels and edge lists"))
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    e = with_config(sub.add_parser("estimate", allow_abbrev=False, help="one method on one generated panel"))
    e.add_argument("--panel", required=True, help="a run directory written by generate")
    e.add_argument("--method", required=True, choices=METHODS)
    e.add_argument("--out")
    e.set_defaults(func=cmd_estimate)

    r = with_config(sub.add_parser("run", allow_abbrev=False, help="full experiment"))
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_run)

    s = with_config(sub.add_parser("sweep", allow_abbrev=False, help="embedding-dimension sweep"))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    rp = sub.add_parser("report", allow_abbrev=False, help="re-render a saved table.json")
    rp.add_argument("--table", required=True)
    rp.add_argument("--format", default="markdown", choices=["json", "csv", "markdown", "md"])
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args, extra = build_parser().parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args, extra)
    except (ValueError, OSError) as exc:
        print(f"proemb {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
