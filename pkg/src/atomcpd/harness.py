"""Scripted experiments.

* ``exp1``  planted rank-one matrices, proposed detector vs. filtered derivative
* ``exp2``  sparse blocks with growing amplitudes under four (theta, lam, gamma) rows
* ``tradeoff``  cut matrices sampled at n and k*n, nuclear vs. scaled nuclear ball
* ``rates``  Monte Carlo success rates on instances built to satisfy the recovery condition

Every result is reproducible from ``(experiment id, base seed)``; trial ``i``
draws from ``PCG64([seed, i, ...])``. Aggregates are a pure function of the
stored per-trial records (see :func:`aggregate`).
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .detector import DetectorConfig, detect
from .exceptions import ConfigError
from .geometry import (
    analytic_eta_bound,
    check_recovery_condition,
    estimate_eta,
    scale_lambda,
    theorem_parameter_rule,
)
from .reconstruction import error_bound, reconstruct_segment
from .regularizers import get_regularizer
from .signals import (
    PiecewiseConstantSignal,
    Segment,
    corrupt,
    generate_cut_matrix,
    generate_planted_lowrank,
    generate_sparse_blocks,
    make_rng,
    signal_statistics,
)

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "FIG2_RUNS",
    "EXPERIMENTS",
    "run_exp1",
    "run_exp2",
    "run_tradeoff",
    "run_rate_verification",
    "run_experiment",
    "canonical_experiment",
    "aggregate",
    "binomial_slack",
    "peak_contrast",
    "write_result",
]

# (theta, lam, gamma)
FIG2_RUNS = ((10, 1.0, 15.0), (10, 2.0, 9.0), (30, 1.0, 8.0), (30, 2.0, 6.0))
SUCCESS_RATE = 0.9
SLACK_SIGMAS = 3.0


def binomial_slack(prob, trials, k=SLACK_SIGMAS):
    """``k`` standard deviations of a binomial proportion with success probability ``prob``."""
    prob = min(max(prob, 0.0), 1.0)
    return k * math.sqrt(prob * (1.0 - prob) / trials)


def peak_contrast(S):
    """``max(S) / median(S)``."""
    S = np.asarray(S, dtype=float)
    med = float(np.median(S))
    return float(S.max() / med) if med > 0 else float("inf")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: str
    trials: int = 1
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "experiment_id", canonical_experiment(self.experiment_id))
        if self.experiment_id not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment_id!r}; choose from {sorted(EXPERIMENTS)}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")


@dataclass
class ExperimentResult:
    experiment_id: str
    config: dict
    trials: list
    aggregates: dict
    traces: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def recompute_aggregates(self):
        return aggregate(self.experiment_id, self.trials, self.config)

    def to_dict(self):
        return {
            "experiment_id": self.experiment_id,
            "config": self.config,
            "trials": self.trials,
            "aggregates": self.aggregates,
            "provenance": self.provenance,
        }


def _provenance(seed):
    return {"seed": seed, "rng": "PCG64", "trial_seed_rule": "[seed, trial, ...]",
            "success_rate_threshold": SUCCESS_RATE, "slack_sigmas": SLACK_SIGMAS}


def _matched(estimates, tau, theta):
    """Number of true change-points with an estimate within ``theta``."""
    return sum(any(abs(e - t) <= theta for e in estimates) for t in tau)


def _all_near(estimates, tau, theta):
    return all(any(abs(e - t) <= theta for t in tau) for e in estimates)


# ---------------------------------------------------------------- exp1

def run_exp1(trials=1, seed=0, scales=(1.0, 2.0), d=200, n=100, change_at=50, sigma=0.04,
             theta=5, lam=0.4, gamma=None):
    """Planted rank-one matrices: nuclear-norm detector vs. the identity baseline.

    ``gamma`` defaults to half the true change size of each instance.
    """
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    records, traces = [], {}
    for i in range(trials):
        for j, scale in enumerate(scales):
            sig = generate_planted_lowrank(d, n, change_at, scale=scale, seed=[seed, i, j])
            obs = corrupt(sig, sigma, seed=[seed, i, j, 1])
            delta, _ = signal_statistics(sig)
            g = delta / 2.0 if gamma is None else gamma
            rec = {"trial": i, "scale": float(scale), "delta": delta, "gamma": g}
            for name, reg, lm in (("proposed", "nuclear", lam), ("baseline", "identity", 0.0)):
                rep = detect(obs, DetectorConfig(theta, g, lm, reg))
                rec[name] = {
                    "estimates": rep.estimates,
                    "contrast": peak_contrast(rep.derivative),
                    "timing_ms": rep.timing_ms,
                }
                traces[f"{name}_scale{scale:g}_trial{i}"] = rep.derivative
            records.append(rec)
    config = {"trials": trials, "seed": seed, "scales": list(scales), "d": d, "n": n,
              "change_at": change_at, "sigma": sigma, "theta": theta, "lambda": lam, "gamma": gamma}
    return ExperimentResult("exp1", config, records, aggregate("exp1", records, config), traces, _provenance(seed))


def _agg_exp1(records, config):
    out = {}
    theta, c = config["theta"], config["change_at"]
    for scale in config["scales"]:
        rs = [r for r in records if r["scale"] == float(scale)]
        key = f"scale{scale:g}"
        for name in ("proposed", "baseline"):
            ok = [len(r[name]["estimates"]) == 1 and abs(r[name]["estimates"][0] - c) <= theta for r in rs]
            out[f"{key}_{name}_success_rate"] = sum(ok) / len(rs)
            out[f"{key}_{name}_mean_contrast"] = float(np.mean([r[name]["contrast"] for r in rs]))
        wins = [r["proposed"]["contrast"] > r["baseline"]["contrast"] for r in rs]
        out[f"{key}_contrast_win_rate"] = sum(wins) / len(rs)
    return out


# ---------------------------------------------------------------- exp2

def run_exp2(seed=0, trials=1, runs=FIG2_RUNS, p=1000, n=1000, k_blocks=10, s=30, base=1.0,
             growth=1.2, sigma=2.5):
    """Sparse blocks with amplitudes ``growth**(k-1)``, l1 prox, four parameter rows."""
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    records, traces = [], {}
    for i in range(trials):
        sig = generate_sparse_blocks(p, n, k_blocks, s, base, growth, seed=[seed, i])
        obs = corrupt(sig, sigma, seed=[seed, i, 1])
        rec = {"trial": i, "tau_star": list(sig.tau_star), "runs": []}
        for k, (theta, lam, gamma) in enumerate(runs):
            rep = detect(obs, DetectorConfig(theta, gamma, lam, "l1"))
            rec["runs"].append({
                "run": k + 1, "theta": theta, "lambda": lam, "gamma": gamma,
                "estimates": rep.estimates,
                "matched": _matched(rep.estimates, sig.tau_star, theta),
                "all_near": _all_near(rep.estimates, sig.tau_star, theta),
                "timing_ms": rep.timing_ms,
            })
            traces[f"run{k + 1}_trial{i}"] = rep.derivative
        records.append(rec)
    config = {"trials": trials, "seed": seed, "runs": [list(r) for r in runs], "p": p, "n": n,
              "k_blocks": k_blocks, "s": s, "base": base, "growth": growth, "sigma": sigma}
    return ExperimentResult("exp2", config, records, aggregate("exp2", records, config), traces, _provenance(seed))


def _agg_exp2(records, config):
    out = {}
    nruns = len(config["runs"])
    for k in range(nruns):
        rs = [r["runs"][k] for r in records]
        out[f"run{k + 1}_mean_matched"] = float(np.mean([x["matched"] for x in rs]))
        out[f"run{k + 1}_all_near_rate"] = sum(x["all_near"] for x in rs) / len(rs)
    if nruns >= 3:
        out["run3_ge_run1_rate"] = sum(r["runs"][2]["matched"] >= r["runs"][0]["matched"] for r in records) / len(records)
    return out


# ---------------------------------------------------------------- tradeoff

def run_tradeoff(k=4, d=32, base_Tmin=40, seed=0, trials=1, num_changes=3, sigma=1.0, num_samples=500):
    """Same continuous-time cut-matrix signal sampled at ``n`` and ``k n``.

    Groups-only detection runs on the coarse sequence with the nuclear prox
    and ``theta_1 = T_min/4``, and on the fine one with the scaled nuclear
    ball and ``theta_2 = k T_min/4``; gamma is ``Delta_min/2`` for both and
    lam follows the ``(sigma/sqrt(theta)) lam*`` rule for each regularizer.
    """
    if k < 2 or int(k) != k:
        raise ConfigError("k must be an integer >= 2")
    if base_Tmin < 4:
        raise ConfigError("base_Tmin must be >= 4")
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    n = base_Tmin * (num_changes + 1)
    records = []
    traces = {}
    for i in range(trials):
        coarse = generate_cut_matrix(d, n, [base_Tmin * (j + 1) for j in range(num_changes)], seed=[seed, i])
        values = [s.value for s in coarse.segments]
        delta, _ = signal_statistics(coarse)
        rec = {"trial": i, "delta": delta, "runs": []}
        for label, factor, reg_id in (("coarse", 1, "nuclear"), ("fine", k, "nuclear_ball_scaled")):
            nn, T = n * factor, base_Tmin * factor
            segs = [Segment(j * T, (j + 1) * T, v) for j, v in enumerate(values)]
            sig = PiecewiseConstantSignal(nn, (d, d), segs, seed=[seed, i], kind="cut_matrix")
            obs = corrupt(sig, sigma, seed=[seed, i, factor])
            theta, gamma = theorem_parameter_rule(delta, T)
            reg = get_regularizer(reg_id, (d, d))
            eta = estimate_eta(reg, sig.distinct_values(), num_samples=num_samples, seed=[seed, i, factor, 2])
            lam = scale_lambda(eta.lambda_star, sigma, theta)
            rep = detect(obs, DetectorConfig(theta, gamma, lam, reg_id, mode="groups_only"))
            tau = sig.tau_star
            localized = len(rep.groups) == len(tau) and all(
                abs(t - tt) <= theta for (lo, hi), tt in zip(rep.groups, tau) for t in (lo, hi)
            )
            rec["runs"].append({
                "label": label, "n": nn, "theta": theta, "gamma": gamma, "lambda": lam,
                "regularizer": reg_id, "eta": eta.eta,
                "groups": [list(g) for g in rep.groups],
                "groups_continuous": [[lo / nn, hi / nn] for lo, hi in rep.groups],
                "window_continuous": theta / nn,
                "localized": localized,
                "timing_ms": rep.timing_ms,
            })
            traces[f"{label}_trial{i}"] = rep.derivative
        records.append(rec)
    config = {"trials": trials, "seed": seed, "k": k, "d": d, "base_Tmin": base_Tmin,
              "num_changes": num_changes, "sigma": sigma, "num_samples": num_samples}
    return ExperimentResult("tradeoff", config, records, aggregate("tradeoff", records, config), traces, _provenance(seed))


def _agg_tradeoff(records, config):
    out = {}
    for idx, label in enumerate(("coarse", "fine")):
        rs = [r["runs"][idx] for r in records]
        out[f"{label}_localized_rate"] = sum(x["localized"] for x in rs) / len(rs)
        out[f"{label}_window_continuous"] = rs[0]["window_continuous"]
        out[f"{label}_denoise_ms_mean"] = float(np.mean([x["timing_ms"]["denoise"] for x in rs]))
    return out


# ---------------------------------------------------------------- rates

def _family_values(family, num_segments, dim, rng, sparsity, rank):
    vals = []
    for _ in range(num_segments):
        for _ in range(100):
            if family == "sparse":
                v = np.zeros(dim)
                v[rng.choice(dim, size=sparsity, replace=False)] = rng.choice([-1.0, 1.0], size=sparsity)
            else:
                u = rng.standard_normal((dim, rank))
                w = rng.standard_normal((dim, rank))
                v = (u @ w.T).ravel()
                v /= np.linalg.norm(v)
            if not vals or np.linalg.norm(v - vals[-1]) > 0:
                break
        vals.append(v)
    return vals


def _rate_instance(family, n, dim, T, num_changes, delta, rng, sparsity, rank):
    vals = _family_values(family, num_changes + 1, dim, rng, sparsity, rank)
    dmin = min(np.linalg.norm(b - a) for a, b in zip(vals[:-1], vals[1:]))
    vals = [v * (delta / dmin) for v in vals]
    bounds = [0] + [T * (j + 1) for j in range(num_changes)] + [n]
    shape = (dim,) if family == "sparse" else (dim, dim)
    segs = [Segment(a, b, v) for a, b, v in zip(bounds[:-1], bounds[1:], vals)]
    return PiecewiseConstantSignal(n, shape, segs, kind=f"rates_{family}")


def run_rate_verification(family="sparse", n=500, p_or_d=200, r=1.5, trials=200, seed=0, *,
                          sparsity=5, rank=1, num_changes=4, margin=1.05, sigma=1.0,
                          num_samples=2000, recon_s=3.0):
    """Monte Carlo check of the recovery guarantees on instances built to satisfy them.

    Change sizes are set to ``margin`` times the smallest value allowed by
    the recovery condition; ``theta = T_min/4``, ``gamma = Delta_min/2`` and
    ``lam = (sigma/sqrt(theta)) lam*``. Per trial this records exact
    recovery, the groups-only property, the two threshold events (some
    change-point below gamma; some far index at or above gamma) and the
    reconstruction error between the first two estimates.
    """
    if family not in ("sparse", "lowrank"):
        raise ConfigError(f"family must be 'sparse' or 'lowrank', got {family!r}")
    if not r > 1:
        raise ConfigError(f"r must be > 1, got {r}")
    if not margin >= 1:
        raise ConfigError(f"margin must be >= 1, got {margin}")
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    T = n // (num_changes + 1)
    if T < 4:
        raise ConfigError("n too small for the requested number of change-points")
    shape = (p_or_d,) if family == "sparse" else (p_or_d, p_or_d)
    reg_id = "l1" if family == "sparse" else "nuclear"
    reg = get_regularizer(reg_id, shape)

    # eta depends only on sparsity/rank for these families, so it is estimated once
    probe = _rate_instance(family, n, p_or_d, T, num_changes, 1.0, make_rng([seed, 0]), sparsity, rank)
    eta = estimate_eta(reg, probe.distinct_values(), num_samples=num_samples, seed=[seed, 10**6])
    boundary = 8.0 * sigma * (eta.eta + r * math.sqrt(2.0 * math.log(n))) / math.sqrt(T)
    delta = margin * boundary
    cond = check_recovery_condition(delta, T, sigma, n, r, eta.eta)
    if not cond.satisfied:
        raise ConfigError(f"instance does not satisfy the recovery condition: {cond.to_dict()}")
    theta, gamma = theorem_parameter_rule(delta, T)
    lam = scale_lambda(eta.lambda_star, sigma, theta)
    gamma_floor = 2.0 * sigma / math.sqrt(theta) * (eta.eta + r * math.sqrt(2.0 * math.log(n)))

    records = []
    for i in range(trials):
        sig = _rate_instance(family, n, p_or_d, T, num_changes, delta, make_rng([seed, i]), sparsity, rank)
        obs = corrupt(sig, sigma, seed=[seed, i, 1])
        rep = detect(obs, DetectorConfig(theta, gamma, lam, reg_id, mode="full"))
        grp = detect(obs, DetectorConfig(theta, gamma, lam, reg_id, mode="groups_only"))
        tau = list(sig.tau_star)
        est = sorted(rep.estimates)
        errors = [abs(a - b) for a, b in zip(est, tau)] if len(est) == len(tau) else []
        success = len(est) == len(tau) and max(errors, default=0) <= theta
        groups_ok = len(grp.groups) == len(tau) and all(
            abs(tt - t) <= theta for (lo, hi), tt in zip(grp.groups, tau) for t in (lo, hi)
        )
        S = rep.derivative
        e1c = any(S[t - theta] < gamma for t in tau)
        far = [t for t in range(theta, n - theta + 1) if all(abs(t - tt) > theta for tt in tau)]
        e2c = any(S[t - theta] >= gamma for t in far)

        recon = {"applicable": False, "violated": True, "error2": None, "bound": None}
        if len(est) >= 2 and est[1] - est[0] > 2 * theta:
            seg = reconstruct_segment(obs, est[0], est[1], theta, reg, lambda_star=eta.lambda_star, sigma=sigma)
            lo, hi = seg.interval
            err2 = max(float(np.sum((seg.x_bar - sig.value_at(t - 1)) ** 2)) for t in range(lo, hi + 1))
            bnd = error_bound(sigma, seg.m, eta.eta, recon_s)
            recon = {"applicable": True, "violated": err2 > bnd, "error2": err2, "bound": bnd}
        records.append({
            "trial": i, "estimates": est, "success": success, "max_error": max(errors, default=None),
            "groups": [list(g) for g in grp.groups], "groups_ok": groups_ok,
            "E1c": e1c, "E2c": e2c, "reconstruction": recon,
        })
    config = {"family": family, "n": n, "p_or_d": p_or_d, "r": r, "trials": trials, "seed": seed,
              "sparsity": sparsity, "rank": rank, "num_changes": num_changes, "margin": margin,
              "sigma": sigma, "num_samples": num_samples, "recon_s": recon_s,
              "T_min": T, "delta_min": delta, "theta": theta, "gamma": gamma, "gamma_floor": gamma_floor,
              "lambda": lam, "eta": eta.eta, "eta_std_error": eta.std_error, "lambda_star": eta.lambda_star,
              "eta_bound": (analytic_eta_bound("sparse", s=sparsity, p=p_or_d) if family == "sparse"
                            else analytic_eta_bound("lowrank", r=rank, d=p_or_d)),
              "recovery_condition": cond.to_dict()}
    return ExperimentResult("rates", config, records, aggregate("rates", records, config), {}, _provenance(seed))


def _agg_rates(records, config):
    N = len(records)
    n, r = config["n"], config["r"]
    tail = n ** (1.0 - r * r)
    out = {
        "success_rate": sum(x["success"] for x in records) / N,
        "success_bound": 1.0 - 5.0 * tail,
        "groups_rate": sum(x["groups_ok"] for x in records) / N,
        "groups_bound": 1.0 - 4.0 * tail,
        "E1c_rate": sum(x["E1c"] for x in records) / N,
        "E2c_rate": sum(x["E2c"] for x in records) / N,
        "event_bound": 2.0 * tail,
        "recon_violation_rate": sum(x["reconstruction"]["violated"] for x in records) / N,
        "recon_bound": 4.0 * tail + math.exp(-config["recon_s"] ** 2 / 2.0),
    }
    if N > 1:
        out["success_pass"] = out["success_rate"] >= out["success_bound"] - binomial_slack(out["success_bound"], N)
        out["groups_pass"] = out["groups_rate"] >= out["groups_bound"] - binomial_slack(out["groups_bound"], N)
        eb = out["event_bound"]
        out["E1c_pass"] = out["E1c_rate"] <= eb + binomial_slack(eb, N)
        out["E2c_pass"] = out["E2c_rate"] <= eb + binomial_slack(eb, N)
        rb = out["recon_bound"]
        out["recon_pass"] = out["recon_violation_rate"] <= rb + binomial_slack(rb, N)
    return out


_AGGREGATORS = {"exp1": _agg_exp1, "exp2": _agg_exp2, "tradeoff": _agg_tradeoff, "rates": _agg_rates}


def aggregate(experiment_id, records, config):
    """Recompute summary statistics from per-trial records."""
    return _AGGREGATORS[experiment_id](records, config)


EXPERIMENTS = {
    "exp1": lambda trials, seed, **kw: run_exp1(trials=trials, seed=seed, **kw),
    "exp2": lambda trials, seed, **kw: run_exp2(seed=seed, trials=trials, **kw),
    "tradeoff": lambda trials, seed, **kw: run_tradeoff(seed=seed, trials=trials, **kw),
    "rates": lambda trials, seed, **kw: run_rate_verification(trials=trials, seed=seed, **kw),
}


EXPERIMENT_ALIASES = {
    "exp1_lowrank": "exp1",
    "exp2_sparse": "exp2",
    "tradeoff_sampling": "tradeoff",
    "rate_verification": "rates",
}


def canonical_experiment(experiment_id):
    return EXPERIMENT_ALIASES.get(experiment_id, experiment_id)


def run_experiment(experiment_id, trials=1, seed=0, out=None, **params):
    """Run an experiment by id (short or long form) and optionally write its outputs to ``out``."""
    cfg = ExperimentConfig(canonical_experiment(experiment_id), trials, seed, params)
    t0 = time.perf_counter()
    result = EXPERIMENTS[cfg.experiment_id](trials, seed, **params)
    result.provenance["wall_ms"] = (time.perf_counter() - t0) * 1e3
    if out is not None:
        write_result(result, out)
    return result


def write_result(result, out_dir):
    """Write ``<id>.json`` and ``<id>_traces.csv`` (long format: trace, t, S)."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{result.experiment_id}.json")
    with open(path, "w") as fh:
        json.dump(result.to_dict(), fh, indent=1)
    theta_for = _trace_offsets(result)
    with open(os.path.join(out_dir, f"{result.experiment_id}_traces.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trace", "t", "S"])
        for name, S in result.traces.items():
            off = theta_for(name)
            for k, v in enumerate(S):
                w.writerow([name, off + k, repr(float(v))])
    return path


def _trace_offsets(result):
    cfg = result.config
    if result.experiment_id == "exp1":
        return lambda name: cfg["theta"]
    if result.experiment_id == "exp2":
        return lambda name: cfg["runs"][int(name.split("_")[0][3:]) - 1][0]
    if result.experiment_id == "tradeoff":
        def off(name):
            label, trial = name.split("_trial")
            idx = 0 if label == "coarse" else 1
            return result.trials[int(trial)]["runs"][idx]["theta"]
        return off
    return lambda name: 0
