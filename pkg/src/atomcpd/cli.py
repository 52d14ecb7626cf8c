"""Command line interface: ``atomcpd <subcommand> ...``.

Exit codes are 0 on success, 2 for configuration or input errors and 3 for
numerical failures. Diagnostics go to stderr as one JSON object per line.

``--config FILE`` reads a flat JSON object whose keys mirror the
subcommand's long flags (``"theta": 5``, ``"lambda": "auto"``); its values
override flags given on the command line.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings

import numpy as np

from . import __version__
from .detector import AutoLambda, DetectorConfig, StreamingDetector, detect
from .exceptions import ConfigError, NumericalError
from .geometry import DEFAULT_NUM_SAMPLES, analytic_eta_bound, estimate_eta
from .harness import EXPERIMENT_ALIASES, EXPERIMENTS, run_experiment
from .io import read_cpd_csv, read_sidecar, write_cpd_csv, write_sidecar
from .reconstruction import ShortSegmentWarning, reconstruct_all
from .regularizers import canonical_id, get_regularizer
from .schema import SCHEMA_NAMES, all_schemas, load_schema
from .signals import ObservationSequence, corrupt, generate

PROX_CHOICES = ("l1", "nuclear", "nuclear-ball", "none", "identity", "nuclear_ball_scaled")

REQUIRED = {
    "generate": ("kind", "n", "output"),
    "detect": ("input", "theta", "gamma", "output"),
    "eta": ("prox", "dim"),
    "reconstruct": ("input", "report", "output"),
    "experiment run": ("id",),
}


def _diag(level, **fields):
    print(json.dumps({"level": level, **fields}, default=str), file=sys.stderr)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _int_list(text):
    if text is None or text == "":
        return []
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _lambda(text):
    if text == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a float or 'auto', got {text!r}") from None


def build_parser():
    parser = _Parser(prog="atomcpd", description="Change-point detection with proximal denoising.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--schema", nargs="?", const="all", choices=SCHEMA_NAMES + ("all",),
                        help="print a JSON schema for an output kind and exit")
    parser.add_argument("--threads", type=int, default=None, help="worker cap (default: available cores)")
    parser.add_argument("--config", default=None, help="flat JSON file overriding subcommand flags")
    sub = parser.add_subparsers(dest="command")

    g = sub.add_parser("generate", help="synthetic signal plus noisy observations")
    g.set_defaults(_path="generate")
    g.add_argument("--kind", choices=("sparse_blocks", "planted_lowrank", "cut_matrix"))
    g.add_argument("--n", type=int)
    g.add_argument("--p", type=int, help="vector dimension (sparse_blocks)")
    g.add_argument("--d", type=int, help="matrix side (planted_lowrank, cut_matrix)")
    g.add_argument("--k-blocks", type=int, default=10)
    g.add_argument("--s", type=int, default=30, help="block sparsity")
    g.add_argument("--base", type=float, default=1.0)
    g.add_argument("--growth", type=float, default=1.2)
    g.add_argument("--change-at", type=int)
    g.add_argument("--scale", type=float, default=1.0)
    g.add_argument("--change-points", type=_int_list, default=[])
    g.add_argument("--sigma", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--output", help="CPD-CSV path for the observations")
    g.add_argument("--sidecar", help="signal JSON path (default: output with .json suffix)")

    d = sub.add_parser("detect", help="estimate change-points from a CPD-CSV file")
    d.set_defaults(_path="detect")
    d.add_argument("--input")
    d.add_argument("--theta", type=int)
    d.add_argument("--gamma", type=float)
    d.add_argument("--lambda", dest="lam", type=_lambda, default=0.0)
    d.add_argument("--prox", choices=PROX_CHOICES, default="l1")
    d.add_argument("--mode", choices=("full", "groups", "groups_only"), default="full")
    d.add_argument("--output")
    d.add_argument("--signal", help="signal sidecar (needed for --lambda auto)")
    d.add_argument("--sigma", type=float)
    d.add_argument("--samples", type=int, default=DEFAULT_NUM_SAMPLES)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--streaming", action="store_true", help="feed rows one at a time")

    e = sub.add_parser("eta", help="Monte Carlo Gaussian distance")
    e.set_defaults(_path="eta")
    e.add_argument("--prox", choices=PROX_CHOICES)
    e.add_argument("--sparsity", type=int)
    e.add_argument("--rank", type=int)
    e.add_argument("--dim", type=int)
    e.add_argument("--samples", type=int, default=DEFAULT_NUM_SAMPLES)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--output", help="JSON path (default: stdout)")

    r = sub.add_parser("reconstruct", help="denoised segment values between estimates")
    r.set_defaults(_path="reconstruct")
    r.add_argument("--input")
    r.add_argument("--report")
    r.add_argument("--theta", type=int, help="default: theta from the report")
    r.add_argument("--prox", choices=PROX_CHOICES, help="default: regularizer from the report")
    r.add_argument("--sigma", type=float)
    r.add_argument("--lambda-prime", type=float)
    r.add_argument("--signal", help="signal sidecar supplying representatives for automatic lambda'")
    r.add_argument("--samples", type=int, default=DEFAULT_NUM_SAMPLES)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--output", help="CPD-CSV path for segment values")
    r.add_argument("--metadata", help="JSON path (default: output with .json suffix)")

    x = sub.add_parser("experiment", help="scripted experiments")
    xs = x.add_subparsers(dest="action")
    xr = xs.add_parser("run")
    xr.set_defaults(_path="experiment run")
    xr.add_argument("--id", choices=sorted(EXPERIMENTS) + sorted(EXPERIMENT_ALIASES))
    xr.add_argument("--trials", type=int, default=1)
    xr.add_argument("--seed", type=int, default=0)
    xr.add_argument("--out", default=".")
    return parser


def _config_tokens(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config must be a flat JSON object")
    tokens = []
    for key, value in cfg.items():
        flag = "--" + str(key).replace("_", "-")
        if isinstance(value, (dict, list)) and not (isinstance(value, list) and key.replace("-", "_") == "change_points"):
            raise ConfigError(f"{path}: config value for {key!r} must be a scalar")
        if isinstance(value, bool):
            if value:
                tokens.append(flag)
            continue
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        if value is None:
            continue
        tokens += [flag, str(value)]
    return tokens


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.schema is None and args.command is None:
        raise ConfigError("a subcommand is required: generate, detect, eta, reconstruct or experiment run")
    if args.command == "experiment" and getattr(args, "action", None) is None:
        raise ConfigError("experiment needs an action: run")
    if args.config:
        # config values go last so they override flags on the command line
        args = parser.parse_args(list(argv) + _config_tokens(args.config))
    if args.schema is None:
        for name in REQUIRED[args._path]:
            dest = "lam" if name == "lambda" else name.replace("-", "_")
            if getattr(args, dest, None) is None:
                raise ConfigError(f"missing required flag --{name}")
    if args.threads is not None and args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    return args


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")
    _diag("info", event="wrote", path=path)


def _default_sidecar(path):
    root, _ = os.path.splitext(path)
    return root + ".json"


def cmd_generate(args):
    kind = args.kind
    if kind == "sparse_blocks":
        if args.p is None:
            raise ConfigError("missing required flag --p for sparse_blocks")
        params = dict(p=args.p, n=args.n, k_blocks=args.k_blocks, s=args.s, base=args.base, growth=args.growth)
    elif kind == "planted_lowrank":
        if args.d is None or args.change_at is None:
            raise ConfigError("planted_lowrank needs --d and --change-at")
        params = dict(d=args.d, n=args.n, change_at=args.change_at, scale=args.scale)
    else:
        if args.d is None:
            raise ConfigError("missing required flag --d for cut_matrix")
        params = dict(d=args.d, n=args.n, change_points=args.change_points)
    signal = generate(kind, seed=args.seed, **params)
    noise_seed = [args.seed, 1]
    obs = corrupt(signal, args.sigma, seed=noise_seed)
    write_cpd_csv(args.output, obs)
    _diag("info", event="wrote", path=args.output)
    side = args.sidecar or _default_sidecar(args.output)
    write_sidecar(side, signal, sigma=args.sigma, noise_seed=noise_seed)
    _diag("info", event="wrote", path=side)


def cmd_detect(args):
    obs = read_cpd_csv(args.input, sigma=args.sigma)
    lam = args.lam
    if lam == "auto":
        if args.signal is None:
            raise ConfigError("--lambda auto needs --signal with representative values")
        signal, raw = read_sidecar(args.signal)
        sigma = args.sigma if args.sigma is not None else raw.get("sigma")
        if sigma is None:
            raise ConfigError("--lambda auto needs --sigma (or a sidecar with sigma)")
        lam = AutoLambda(signal.distinct_values(), sigma, num_samples=args.samples, seed=args.seed)
    config = DetectorConfig(args.theta, args.gamma, lam, args.prox, mode=args.mode)
    if args.streaming:
        det = StreamingDetector(config, obs.shape)
        for row in obs.data:
            det.update(row)
        det.close()
        report = det.report()
    else:
        report = detect(obs, config, n_jobs=args.threads)
    payload = report.to_dict()
    payload.update(seed=args.seed, input=args.input, streaming=bool(args.streaming))
    _write_json(args.output, payload)


def _eta_representative(prox, dim, sparsity, rank):
    if prox == "l1":
        if sparsity is None:
            raise ConfigError("--prox l1 needs --sparsity")
        if not 1 <= sparsity <= dim:
            raise ConfigError(f"--sparsity must be in [1, {dim}]")
        x = np.zeros(dim)
        x[:sparsity] = 1.0
        return (dim,), x, analytic_eta_bound("sparse", s=sparsity, p=dim)
    if prox in ("nuclear", "nuclear_ball_scaled"):
        if rank is None:
            raise ConfigError(f"--prox {prox} needs --rank")
        if not 1 <= rank <= dim:
            raise ConfigError(f"--rank must be in [1, {dim}]")
        x = np.zeros((dim, dim))
        x[range(rank), range(rank)] = 1.0
        # the scaled ball only rescales lam, so eta and its bound are unchanged
        return (dim, dim), x, analytic_eta_bound("lowrank", r=rank, d=dim)
    raise ConfigError(f"--prox {prox} has no Gaussian distance")


def cmd_eta(args):
    prox = canonical_id(args.prox)
    shape, x, bound = _eta_representative(prox, args.dim, args.sparsity, args.rank)
    reg = get_regularizer(prox, shape)
    est = estimate_eta(reg, [x], num_samples=args.samples, seed=args.seed)
    payload = est.to_dict()
    payload.update(bound=bound, prox=prox, dim=args.dim, sparsity=args.sparsity, rank=args.rank, seed=args.seed)
    if args.output:
        _write_json(args.output, payload)
    else:
        print(json.dumps(payload))


def cmd_reconstruct(args):
    with open(args.report) as fh:
        try:
            report = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.report}: invalid JSON ({exc})") from exc
    try:
        rcfg = report["config"]
        estimates = report["estimates"] if rcfg["mode"] == "full" else [lo for lo, _ in report["groups"]]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{args.report}: not a detection report ({exc})") from exc
    theta = args.theta if args.theta is not None else int(rcfg["theta"])
    prox = canonical_id(args.prox or rcfg["regularizer"])
    obs = read_cpd_csv(args.input, sigma=args.sigma)
    kwargs = {"seed": args.seed, "num_samples": args.samples}
    sigma = args.sigma
    if args.lambda_prime is not None:
        kwargs["lambda_prime"] = args.lambda_prime
    else:
        raw = None
        if args.signal:
            signal, raw = read_sidecar(args.signal)
            kwargs["representatives"] = signal.distinct_values()
        if sigma is None and raw is not None:
            sigma = raw.get("sigma")
        if sigma is None:
            raise ConfigError("automatic lambda' needs --sigma (or --lambda-prime)")
        kwargs["sigma"] = sigma
        if not args.signal:
            lam = rcfg.get("lambda")
            if not isinstance(lam, (int, float)):
                raise ConfigError("report has no numeric lambda; pass --lambda-prime or --signal")
            # back out the noise-normalized weight used at detection time
            kwargs["lambda_star"] = float(lam) * math.sqrt(int(rcfg["theta"])) / sigma if sigma > 0 else 0.0
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ShortSegmentWarning)
        segments = reconstruct_all(obs, estimates, theta, prox, **kwargs)
    for w in caught:
        _diag("warning", message=str(w.message))
    bounds = [0] + sorted(estimates) + [obs.n]
    skipped = [[a, b] for a, b in zip(bounds[:-1], bounds[1:]) if b - a <= 2 * theta]
    values = np.array([s.x_bar for s in segments]).reshape(len(segments), -1) if segments else np.empty((0, obs.p))
    write_cpd_csv(args.output, ObservationSequence(values, obs.shape))
    _diag("info", event="wrote", path=args.output)
    meta = {
        "segments": [s.to_dict() for s in segments],
        "skipped": skipped,
        "theta": theta,
        "prox": prox,
        "sigma": sigma,
        "seed": args.seed,
        "values_csv": args.output,
    }
    _write_json(args.metadata or _default_sidecar(args.output), meta)


def cmd_experiment(args):
    result = run_experiment(args.id, trials=args.trials, seed=args.seed, out=args.out)
    _diag("info", event="experiment", id=result.experiment_id, aggregates=result.aggregates)


COMMANDS = {
    "generate": cmd_generate,
    "detect": cmd_detect,
    "eta": cmd_eta,
    "reconstruct": cmd_reconstruct,
    "experiment run": cmd_experiment,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        if args.schema is not None:
            out = all_schemas() if args.schema == "all" else load_schema(args.schema)
            print(json.dumps(out, indent=1))
            return 0
        COMMANDS[args._path](args)
        return 0
    except SystemExit as exc:
        # --help / --version
        return int(exc.code or 0)
    except ConfigError as exc:
        _diag("error", type=type(exc).__name__, message=str(exc))
        return 2
    except OSError as exc:
        _diag("error", type=type(exc).__name__, message=str(exc))
        return 2
    except NumericalError as exc:
        _diag("error", type=type(exc).__name__, message=str(exc), **getattr(exc, "diagnostics", {}))
        return 3


if __name__ == "__main__":
    sys.exit(main())
