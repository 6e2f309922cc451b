#!/usr/bin/env python3
"""Reproduce every experiment batch into out/<name>/.

Covers the error-trajectory sweeps, the stability scan, the empirical-vs-
theoretical rate table, the complete-graph size sweep, and the quartic
curvature sweep. Results are CSV curves/tables plus a summary.json per run;
plot them with any external tool.
"""

import argparse
import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

import numpy as np

from radmm import complete_graph
from radmm.core import Params
from radmm.costs import QuadraticCost, centralized_solve
from radmm.events import LossModel
from radmm.experiments import (
    ExperimentConfig,
    batch_trajectories,
    compare_rates,
    fit_rate,
    mean_log_curve,
    run_quartic,
    run_trajectories,
    stability_scan,
)

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


def size_sweep(out_dir, sizes=range(3, 11), p_lambdas=(0.0, 0.2, 0.4, 0.6),
               trials=50, iterations=800, seed=25):
    """Empirical rate for complete graphs of growing size (one CSV table)."""
    os.makedirs(out_dir, exist_ok=True)
    Q = np.array([[3.0, 0.4], [0.4, 2.0]])
    r = np.array([1.0, -0.5])
    p = Params(alpha=0.95, rho=0.5)
    rows = []
    for N in sizes:
        graph = complete_graph(N)
        costs = [QuadraticCost(Q, r)] * N
        x_star = centralized_solve(costs)
        for pl in p_lambdas:
            loss = LossModel(0.8, pl, seed=seed)
            log2, _, div = batch_trajectories(
                graph, costs, p, iterations, loss, trials, x_star,
                z0_scale=1.0, z0_seed=seed,
            )
            fit = fit_rate(mean_log_curve(log2, div))
            rows.append((N, pl, fit.gamma_hat))
    with open(os.path.join(out_dir, "size_sweep.csv"), "w") as fh:
        fh.write("n_nodes,p_lambda,gamma_hat\n")
        for N, pl, gh in rows:
            fh.write(f"{N},{pl:.17g},{gh:.17g}\n")
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump({"command": "size_sweep",
                   "rows": [{"n_nodes": N, "p_lambda": pl, "gamma_hat": gh}
                            for N, pl, gh in rows]}, fh, indent=2)
        fh.write("\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out", help="output root directory")
    ap.add_argument("--fast", action="store_true",
                    help="cut trials/iterations for a quick smoke run")
    args = ap.parse_args()

    jobs = [
        ("fig1_alpha_sweep", run_trajectories, "fig1_alpha_sweep.json"),
        ("fig2_loss_sweep", run_trajectories, "fig2_loss_sweep.json"),
        ("fig3_stability", stability_scan, "fig3_stability.json"),
        ("table3_compare", compare_rates, "compare_table3.json"),
        ("fig6_quartic", run_quartic, "fig6_quartic.json"),
    ]
    for name, fn, cfg_file in jobs:
        cfg = ExperimentConfig.from_json(os.path.join(CONFIG_DIR, cfg_file))
        if args.fast:
            cfg.trials = max(1, cfg.trials // 10)
            cfg.iterations = max(50, cfg.iterations // 2)
        out = os.path.join(args.out, name)
        print(f"[{name}] -> {out}")
        fn(cfg, out)

    print(f"[fig5_size_sweep] -> {os.path.join(args.out, 'fig5_size_sweep')}")
    if args.fast:
        size_sweep(os.path.join(args.out, "fig5_size_sweep"), sizes=range(3, 6),
                   trials=10, iterations=300)
    else:
        size_sweep(os.path.join(args.out, "fig5_size_sweep"))


if __name__ == "__main__":
    main()
