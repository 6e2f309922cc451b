"""Batch experiment drivers: error trajectories, rate fits, stability scans.

Trials are vectorized over a trailing batch axis; every trial draws its
events from its own counter-based stream keyed by (loss seed, trial index),
so runs are bit-reproducible and independent of execution order. Outputs are
CSV curves plus a JSON summary per run; plotting is out of scope.
"""

import itertools
import json
import os
from dataclasses import dataclass, field

import numpy as np

from radmm import topology
from radmm.core import Params
from radmm.costs import QuarticCost, centralized_solve, costs_from_spec
from radmm.events import EventStream, LossModel, draw_events
from radmm.rates import (
    build_L,
    build_rate_model,
    expected_B,
    expected_B_kron,
    observable_mean_rate,
)

DIVERGENCE_THRESHOLD = 1e12
FIT_FLOOR = 1e-10
FIT_CEILING = 1e-3
STABLE_FINAL_ERR = 1e-2


class WindowTooShortError(RuntimeError):
    """Fewer than 20 trajectory points fall inside the fit window."""


@dataclass
class RateFit:
    """Least-squares slope of a logarithmic error trajectory."""

    gamma_hat: float
    k0: int
    k1: int
    residual: float      # RMS of the linear fit residuals
    r_squared: float


@dataclass
class ExperimentConfig:
    """Declarative description of one experiment batch."""

    graph: dict
    cost: dict
    alphas: list
    rhos: list
    p_mu: float = 1.0
    p_lambdas: list = field(default_factory=lambda: [0.0])
    loss_seed: int = 0
    trials: int = 1
    iterations: int = 100
    seed: int = 0
    q_values: list = None
    trial_logs: bool = False
    z0_scale: float = 0.0

    def __post_init__(self):
        if self.trials < 1 or self.iterations < 1:
            raise ValueError("trials and iterations must be >= 1")
        if not self.alphas or not self.rhos or not self.p_lambdas:
            raise ValueError("parameter grids must be non-empty")

    @classmethod
    def from_dict(cls, d):
        loss = d.get("loss", {})
        pl = loss.get("p_lambda", 0.0)
        return cls(
            graph=d["graph"],
            cost=d["cost"],
            alphas=list(np.atleast_1d(d["params"]["alpha"]).astype(float)),
            rhos=list(np.atleast_1d(d["params"]["rho"]).astype(float)),
            p_mu=float(loss.get("p_mu", 1.0)),
            p_lambdas=[float(v) for v in np.atleast_1d(pl)],
            loss_seed=int(loss.get("seed", 0)),
            trials=int(d.get("trials", 1)),
            iterations=int(d.get("iterations", 100)),
            seed=int(d.get("seed", 0)),
            q_values=d.get("q_values"),
            trial_logs=bool(d.get("trial_logs", False)),
            z0_scale=float(d.get("z0_scale", 0.0)),
        )

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def graph_from_spec(spec):
    """Build a graph from ``{"type": ..., ...}`` or an explicit edge list."""
    kind = spec.get("type", "explicit")
    if kind == "explicit":
        return topology.build_graph(spec["n_nodes"], [tuple(e) for e in spec["edges"]])
    if kind == "random_geometric":
        return topology.random_geometric_graph(
            spec["n_nodes"], spec.get("radius", 0.4), spec.get("seed", 0)
        )
    if kind == "complete":
        return topology.complete_graph(spec["n_nodes"])
    raise ValueError(f"unknown graph type {kind!r}")


def build_instance(cfg):
    """(graph, costs, x_star, n) for a config."""
    graph = graph_from_spec(cfg.graph)
    costs = costs_from_spec(cfg.cost, graph.num_nodes)
    x_star = centralized_solve(costs)
    return graph, costs, x_star, costs[0].n


def batch_trajectories(graph, costs, p, iters, loss_model, trials, x_star,
                       z0=None, z0_scale=0.0, z0_seed=0,
                       divergence=DIVERGENCE_THRESHOLD):
    """Run ``trials`` masked trajectories at once.

    Returns ``(log_err2, log_errinf, diverged)`` with error rows for
    k = 0 .. iters (row 0 is the initial error of the zero state). A trial
    whose stacked error exceeds ``divergence`` is frozen and flagged.
    ``z0_scale > 0`` draws each trial's initial auxiliary vector as
    ``z0_scale * N(0, I)`` (seeded per trial), which excites every mode; the
    default starts all trials at zero.
    """
    n = costs[0].n
    N, M = graph.num_nodes, graph.num_slots
    B = trials
    if z0 is not None:
        Z = np.tile(np.asarray(z0, dtype=float).reshape(M, n, 1), (1, 1, B))
    elif z0_scale > 0.0:
        Z = np.empty((M, n, B))
        for b in range(B):
            rng = np.random.default_rng(np.random.SeedSequence([z0_seed, b, 0x5A]))
            Z[:, :, b] = z0_scale * rng.normal(size=(M, n))
    else:
        Z = np.zeros((M, n, B))
    X = np.zeros((N, n, B))
    xs = x_star.reshape(1, n, 1)
    sigma = p.rho * graph.degrees
    streams = None
    if loss_model is not None:
        streams = [EventStream(loss_model.seed, t) for t in range(B)]
    log2 = np.empty((iters + 1, B))
    loginf = np.empty((iters + 1, B))
    diverged = np.zeros(B, dtype=bool)

    def record(row):
        d = X - xs
        pn = np.sqrt((d**2).sum(axis=1))       # (N, B) per-node norms
        e2 = np.sqrt((pn**2).sum(axis=0))
        with np.errstate(divide="ignore"):
            log2[row] = np.log(e2)
            loginf[row] = np.log(pn.max(axis=0))
        return e2

    record(0)
    alive = ~diverged
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(iters):
            if loss_model is not None:
                active = np.empty((N, B), dtype=bool)
                beta = np.empty((M, B), dtype=bool)
                for b in range(B):
                    ev = draw_events(loss_model, graph, k, streams[b])
                    active[:, b] = ev.active
                    beta[:, b] = ev.beta
                active &= alive[None, :]
                beta &= alive[None, :]
            else:
                active = np.broadcast_to(alive[None, :], (N, B))
                beta = np.broadcast_to(alive[None, :], (M, B))
            agg = np.add.reduceat(Z, graph.owner_starts[:-1], axis=0)
            Xn = np.empty_like(X)
            for i in range(N):
                Xn[i] = costs[i].prox(sigma[i], agg[i] / sigma[i])
            X = np.where(active[:, None, :], Xn, X)
            Q = -Z[graph.mirror] + (2 * p.rho) * X[graph.origin]
            Z = np.where(beta[:, None, :], (1 - p.alpha) * Z + p.alpha * Q, Z)
            e2 = record(k + 1)
            newly = alive & ~(np.isfinite(e2) & (e2 <= divergence))
            if newly.any():
                diverged |= newly
                alive = ~diverged
                if not alive.any():
                    log2[k + 2 :] = log2[k + 1]
                    loginf[k + 2 :] = loginf[k + 1]
                    break
    return log2, loginf, diverged


def mean_log_curve(log_err, diverged):
    """Mean over surviving trials of the per-trial log errors."""
    keep = ~diverged
    if not keep.any():
        return np.full(log_err.shape[0], np.nan)
    return log_err[:, keep].mean(axis=1)


def fit_rate(mean_log_err, floor=FIT_FLOOR, ceiling=FIT_CEILING, min_points=20):
    """Fit ``log err ~ s k`` on the window where err lies in [floor, ceiling].

    Returns a :class:`RateFit` with ``gamma_hat = exp(s)``. The window skips
    the initial transient (err above ceiling) and the numerical floor.
    """
    err = np.exp(np.asarray(mean_log_err, dtype=float))
    ks = np.arange(err.shape[0])
    inside = (err >= floor) & (err <= ceiling) & np.isfinite(err)
    if not inside.any():
        raise WindowTooShortError("no trajectory points inside the fit window")
    k0, k1 = int(ks[inside][0]), int(ks[inside][-1])
    sel = inside & (ks >= k0) & (ks <= k1)
    if sel.sum() < min_points:
        raise WindowTooShortError(
            f"only {int(sel.sum())} points inside the fit window, need {min_points}"
        )
    kk, yy = ks[sel], np.asarray(mean_log_err)[sel]
    slope, intercept = np.polyfit(kk, yy, 1)
    pred = slope * kk + intercept
    ss_res = float(((yy - pred) ** 2).sum())
    ss_tot = float(((yy - yy.mean()) ** 2).sum())
    return RateFit(
        gamma_hat=float(np.exp(slope)),
        k0=k0,
        k1=k1,
        residual=float(np.sqrt(ss_res / sel.sum())),
        r_squared=1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0,
    )


def _loss_for(cfg, p_lambda):
    if cfg.p_mu >= 1.0 and p_lambda == 0.0:
        return None
    return LossModel(cfg.p_mu, p_lambda, seed=cfg.loss_seed)


def _write_curve(path, mean2, meaninf):
    with open(path, "w", newline="") as fh:
        fh.write("k,mean_log_err2,mean_log_errinf\n")
        for k, (a, b) in enumerate(zip(mean2, meaninf)):
            fh.write(f"{k},{a:.17g},{b:.17g}\n")


def _combo_tag(alpha, rho, p_lambda):
    return f"alpha{alpha:g}_rho{rho:g}_plam{p_lambda:g}"


def run_trajectories(cfg, out_dir):
    """Mean log-error curves over the (alpha, rho, p_lambda) grid."""
    os.makedirs(out_dir, exist_ok=True)
    graph, costs, x_star, n = build_instance(cfg)
    summary = {"command": "run", "cells": {}, "seed": cfg.seed, "trials": cfg.trials}
    for alpha, rho, p_lambda in itertools.product(cfg.alphas, cfg.rhos, cfg.p_lambdas):
        p = Params(alpha=alpha, rho=rho)
        log2, loginf, diverged = batch_trajectories(
            graph, costs, p, cfg.iterations, _loss_for(cfg, p_lambda), cfg.trials,
            x_star, z0_scale=cfg.z0_scale, z0_seed=cfg.seed,
        )
        tag = _combo_tag(alpha, rho, p_lambda)
        fname = f"traj_{tag}.csv"
        _write_curve(os.path.join(out_dir, fname), mean_log_curve(log2, diverged),
                     mean_log_curve(loginf, diverged))
        cell = {
            "file": fname,
            "diverged_trials": np.nonzero(diverged)[0].tolist(),
        }
        try:
            fit = fit_rate(mean_log_curve(log2, diverged))
            cell["gamma_hat"] = fit.gamma_hat
            cell["fit_window"] = [fit.k0, fit.k1]
        except WindowTooShortError as exc:
            cell["gamma_hat"] = None
            cell["fit_error"] = str(exc)
        if cfg.trial_logs:
            cell["trial_logs"] = _write_trial_logs(
                out_dir, tag, graph, costs, p, cfg, p_lambda, x_star
            )
        summary["cells"][tag] = cell
    _write_summary(out_dir, summary)
    return summary


def _write_trial_logs(out_dir, tag, graph, costs, p, cfg, p_lambda, x_star):
    """Per-trial trajectory CSVs (k, err_inf, err_2, z_residual), one file
    per trial, via the reference single-trial runners."""
    from radmm.core import TrajectoryLog, run_async, run_sync

    loss = _loss_for(cfg, p_lambda)
    files = []
    for t in range(cfg.trials):
        log = TrajectoryLog()
        if loss is None:
            run_sync(costs, graph, p, cfg.iterations, x_star=x_star, log=log)
        else:
            run_async(costs, graph, p, cfg.iterations, loss,
                      EventStream(loss.seed, t), x_star=x_star, log=log)
        fname = f"trial_{tag}_t{t}.csv"
        log.write_csv(os.path.join(out_dir, fname))
        files.append(fname)
    return files


def stability_scan(cfg, out_dir):
    """Mark (rho, alpha) pairs stable when every trial contracts.

    A pair is stable iff all Monte Carlo trials end with a finite error that
    is below the initial error and below ``STABLE_FINAL_ERR``.
    """
    os.makedirs(out_dir, exist_ok=True)
    graph, costs, x_star, n = build_instance(cfg)
    rows = []
    boundary = {}
    for p_lambda in cfg.p_lambdas:
        for rho in cfg.rhos:
            max_stable = None
            for alpha in cfg.alphas:
                p = Params(alpha=alpha, rho=rho)
                log2, _, diverged = batch_trajectories(
                    graph, costs, p, cfg.iterations, _loss_for(cfg, p_lambda),
                    cfg.trials, x_star, z0_scale=cfg.z0_scale, z0_seed=cfg.seed,
                )
                final = np.exp(log2[-1])
                initial = np.exp(log2[0])
                stable = bool(
                    (~diverged).all()
                    and np.isfinite(final).all()
                    and (final < initial).all()
                    and (final < STABLE_FINAL_ERR).all()
                )
                rows.append((p_lambda, rho, alpha, stable, float(np.nanmax(final))))
                if stable:
                    max_stable = alpha if max_stable is None else max(max_stable, alpha)
            boundary[(p_lambda, rho)] = max_stable
    with open(os.path.join(out_dir, "scan_table.csv"), "w", newline="") as fh:
        fh.write("p_lambda,rho,alpha,stable,max_final_err\n")
        for pl, rho, alpha, st, mf in rows:
            fh.write(f"{pl:.17g},{rho:.17g},{alpha:.17g},{int(st)},{mf:.17g}\n")
    with open(os.path.join(out_dir, "boundary.csv"), "w", newline="") as fh:
        fh.write("p_lambda,rho,max_stable_alpha\n")
        for (pl, rho), ms in boundary.items():
            fh.write(f"{pl:.17g},{rho:.17g},{'' if ms is None else format(ms, '.17g')}\n")
    summary = {
        "command": "scan",
        "boundary": {f"plam{pl:g}_rho{rho:g}": ms for (pl, rho), ms in boundary.items()},
    }
    _write_summary(out_dir, summary)
    return summary


def compare_rates(cfg, out_dir):
    """Empirical rate vs the theoretical mean rate over the full grid.

    Quadratic costs only (the linearized model is then exact globally).
    Emits per-cell gamma_hat, bar_gamma_M, sqrt(bar_gamma_M) and the
    relative difference |gamma_hat - bar_gamma_M| / bar_gamma_M.
    """
    os.makedirs(out_dir, exist_ok=True)
    graph, costs, x_star, n = build_instance(cfg)
    rows = []
    diffs = []
    diffs_obs = []
    for alpha, rho in itertools.product(cfg.alphas, cfg.rhos):
        p = Params(alpha=alpha, rho=rho)
        model = build_rate_model(graph, costs, p, x_star)
        for p_lambda in cfg.p_lambdas:
            loss = LossModel(cfg.p_mu, p_lambda, seed=cfg.loss_seed)
            EB = expected_B(loss, graph, n)
            EBB = expected_B_kron(loss, graph, n)
            rmodel = build_L(model, EB, EBB)
            obs = observable_mean_rate(model, cfg.p_mu * (1.0 - p_lambda))
            log2, _, diverged = batch_trajectories(
                graph, costs, p, cfg.iterations, _loss_for(cfg, p_lambda),
                cfg.trials, x_star, z0_scale=cfg.z0_scale, z0_seed=cfg.seed,
            )
            status = "ok"
            gamma_hat = None
            rel = None
            rel_obs = None
            try:
                fit = fit_rate(mean_log_curve(log2, diverged))
                gamma_hat = fit.gamma_hat
                rel = abs(gamma_hat - rmodel.bar_gamma_M) / rmodel.bar_gamma_M
                rel_obs = abs(gamma_hat - obs) / obs
                diffs.append(rel)
                diffs_obs.append(rel_obs)
            except WindowTooShortError as exc:
                status = f"window_too_short: {exc}"
            rows.append(
                (alpha, rho, p_lambda, gamma_hat, rmodel.bar_gamma_M,
                 float(np.sqrt(rmodel.bar_gamma_M)), obs, rel, rel_obs, status)
            )
    with open(os.path.join(out_dir, "compare.csv"), "w", newline="") as fh:
        fh.write("alpha,rho,p_lambda,gamma_hat,bar_gamma_M,sqrt_bar_gamma_M,"
                 "observable_rate,rel_diff,rel_diff_observable,status\n")
        for a, r, pl, gh, bg, sq, obs, rel, rel_obs, st in rows:
            gh_s = "" if gh is None else f"{gh:.17g}"
            rel_s = "" if rel is None else f"{rel:.17g}"
            ro_s = "" if rel_obs is None else f"{rel_obs:.17g}"
            fh.write(f"{a:.17g},{r:.17g},{pl:.17g},{gh_s},{bg:.17g},{sq:.17g},"
                     f"{obs:.17g},{rel_s},{ro_s},{st}\n")
    diffs = np.array(diffs)
    diffs_obs = np.array(diffs_obs)
    summary = {
        "command": "compare",
        "cells_total": len(rows),
        "cells_fitted": int(diffs.size),
        "rel_diff_max": float(diffs.max()) if diffs.size else None,
        "rel_diff_min": float(diffs.min()) if diffs.size else None,
        "rel_diff_mean": float(diffs.mean()) if diffs.size else None,
        "rel_diff_std": float(diffs.std()) if diffs.size else None,
        "rel_diff_observable_max": float(diffs_obs.max()) if diffs_obs.size else None,
    }
    _write_summary(out_dir, summary)
    return summary


def run_quartic(cfg, out_dir):
    """Curvature sweep with identical scalar quartic costs.

    For each q, runs the lossy iteration, writes the mean log-error curve,
    fits the empirical rate, and reports the local prediction bar_gamma_M
    from the linearization at the optimum together with the fit's R^2.
    """
    os.makedirs(out_dir, exist_ok=True)
    graph = graph_from_spec(cfg.graph)
    qs = cfg.q_values or list(np.atleast_1d(cfg.cost.get("q", 1.0)))
    alpha, rho = cfg.alphas[0], cfg.rhos[0]
    p_lambda = cfg.p_lambdas[0]
    p = Params(alpha=alpha, rho=rho)
    summary = {"command": "quartic", "cells": {}}
    for q in qs:
        costs = [QuarticCost(q) for _ in range(graph.num_nodes)]
        x_star = centralized_solve(costs)
        log2, loginf, diverged = batch_trajectories(
            graph, costs, p, cfg.iterations, _loss_for(cfg, p_lambda),
            cfg.trials, x_star, z0_scale=cfg.z0_scale, z0_seed=cfg.seed,
        )
        mean2 = mean_log_curve(log2, diverged)
        fname = f"quartic_q{q:g}.csv"
        _write_curve(os.path.join(out_dir, fname), mean2, mean_log_curve(loginf, diverged))
        model = build_rate_model(graph, costs, p, x_star)
        loss = LossModel(cfg.p_mu, p_lambda, seed=cfg.loss_seed)
        rmodel = build_L(model, expected_B(loss, graph, 1),
                         expected_B_kron(loss, graph, 1))
        cell = {"file": fname, "bar_gamma_M": rmodel.bar_gamma_M,
                "diverged_trials": np.nonzero(diverged)[0].tolist()}
        try:
            fit = fit_rate(mean2)
            cell.update(gamma_hat=fit.gamma_hat, r_squared=fit.r_squared,
                        fit_window=[fit.k0, fit.k1])
        except WindowTooShortError as exc:
            cell.update(gamma_hat=None, fit_error=str(exc))
        summary["cells"][f"q{q:g}"] = cell
    _write_summary(out_dir, summary)
    return summary


def spectral_report(cfg, out_dir):
    """Rate analysis only: one report cell per (alpha, rho, p_lambda)."""
    from radmm.rates import check_lemma2, rate_report

    os.makedirs(out_dir, exist_ok=True)
    graph, costs, x_star, n = build_instance(cfg)
    cells = {}
    for alpha, rho in itertools.product(cfg.alphas, cfg.rhos):
        p = Params(alpha=alpha, rho=rho)
        model = build_rate_model(graph, costs, p, x_star)
        lemma2 = check_lemma2(model)
        for p_lambda in cfg.p_lambdas:
            loss = LossModel(cfg.p_mu, p_lambda, seed=cfg.loss_seed)
            rmodel = build_L(model, expected_B(loss, graph, n),
                             expected_B_kron(loss, graph, n))
            cells[_combo_tag(alpha, rho, p_lambda)] = rate_report(model, rmodel, lemma2)
    summary = {"command": "rate", "cells": cells}
    _write_summary(out_dir, summary)
    return summary


def _write_summary(out_dir, summary):
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
