"""A reduced experiment: every method on a few small panels.

Runs in well under a minute on one core. The desk-scale table uses the
defaults of ExperimentConfig instead (n=2000, V=2000, 10 runs).

    python3 demos/small_experiment.py
"""

import time

from proemb.harness import METHODS, ExperimentConfig, render_markdown, run_experiment

cfg = ExperimentConfig(n=800, V=600, runs=3, epochs=20, methods=METHODS, seed=11)
start = time.perf_counter()
table = run_experiment(cfg)
print(render_markdown(table))
for diag in table.diagnostics[cfg.setting]:
    print(f"held-out |D-0.5|: {diag['heldout_balance_start']:.3f} -> {diag['heldout_balance_end']:.3f}")
print(f"{time.perf_counter() - start:.0f}s")
