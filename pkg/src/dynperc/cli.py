"""Command line entry point.

Exit status: 0 on success or PASS, 2 when a check fails, 1 on error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from . import checks, io
from .capacity import capacity as compute_capacity
from .capacity import default_resolution, hps_condition
from .dynamics import batch_traces, estimate_hit_probability, iter_batches
from .errors import ConfigInvalid, DynPercError
from .target_set import load_target
from .tree import PercolationParams, power_counts, tree_from_spec

COMMANDS = ("capacity", "simulate", "bounds-check", "dim-sweep", "betaset", "hps-check")
SERIES_DEPTH = 4096


@dataclass
class RunConfig:
    command: str
    tree: Optional[str] = None
    target: Optional[str] = None
    kernel: str = "h"
    p: Optional[float] = None
    alpha: Optional[float] = None
    alphas: Optional[str] = None
    beta: Optional[float] = None
    resolution: Optional[float] = None
    tol: float = 1e-8
    max_iter: int = 100_000
    runs: int = 10_000
    seed: int = 0
    horizon: Optional[float] = None
    terms: Optional[int] = None
    ns: str = "16,32,64,128,256"
    diag_policy: Optional[str] = None
    out: Optional[str] = None
    format: str = "json"

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigInvalid(f"unknown command {self.command!r}")
        if self.p is None or not 0.0 < self.p < 1.0:
            raise ConfigInvalid("--p must lie in (0, 1)")
        if self.tree is None:
            raise ConfigInvalid("--tree is required")
        needs_target = {"capacity", "bounds-check", "dim-sweep", "betaset"}
        if self.command in needs_target and self.target is None:
            raise ConfigInvalid(f"{self.command} needs --target")
        if self.command == "dim-sweep" and self.alphas is None:
            raise ConfigInvalid("dim-sweep needs --alphas A:B:STEPS")
        if self.runs < 1:
            raise ConfigInvalid("--runs must be >= 1")
        if self.format not in ("json", "csv"):
            raise ConfigInvalid("--format must be json or csv")


def parse_alphas(text: str) -> np.ndarray:
    try:
        a, b, steps = text.split(":")
        grid = np.linspace(float(a), float(b), int(steps))
    except ValueError:
        raise ConfigInvalid(f"--alphas expects A:B:STEPS, got {text!r}") from None
    if grid.size < 1:
        raise ConfigInvalid("--alphas needs at least one step")
    return grid


def _load_tree_spec(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _resolution(cfg: RunConfig, d) -> float:
    return cfg.resolution if cfg.resolution is not None else default_resolution(d)


def cmd_capacity(cfg: RunConfig):
    t = tree_from_spec(_load_tree_spec(cfg.tree))
    d = load_target(cfg.target)
    res = compute_capacity(t, d, PercolationParams(cfg.p), _resolution(cfg, d), kernel=cfg.kernel,
                           alpha=cfg.alpha, beta=cfg.beta, tol=cfg.tol, max_iter=cfg.max_iter,
                           diag_policy=cfg.diag_policy or "half_width")
    return res.to_dict(), None, True


def cmd_simulate(cfg: RunConfig):
    t = tree_from_spec(_load_tree_spec(cfg.tree))
    params = PercolationParams(cfg.p)
    d = load_target(cfg.target) if cfg.target else None
    T = cfg.horizon if cfg.horizon is not None else (d.sup if d is not None and not d.is_empty else 1.0)
    report = {"tree_hash": t.digest, "p": cfg.p, "horizon": T, "runs": cfg.runs, "seed": cfg.seed}
    if d is not None:
        est = estimate_hit_probability(t, params, d, cfg.runs, cfg.seed, horizon=T)
        report.update(hits=est.hits, p_hat=est.p_hat, std_err=est.std_err)
    rows = None
    if cfg.format == "csv":
        rows = []
        for b in iter_batches(t, params, T, cfg.seed, cfg.runs):
            for r, tr in enumerate(batch_traces(t, b)):
                rows.extend((b.first_run + r, a, z) for a, z in tr.intervals)
        rows = (["run", "start", "end"], rows)
    return report, rows, True


def cmd_bounds_check(cfg: RunConfig):
    t = tree_from_spec(_load_tree_spec(cfg.tree))
    d = load_target(cfg.target)
    rep = checks.bounds_check(t, d, PercolationParams(cfg.p), cfg.runs, cfg.seed,
                              resolution=cfg.resolution, tol=cfg.tol, max_iter=cfg.max_iter,
                              horizon=cfg.horizon)
    out = rep.to_dict()
    out["verdict"] = "PASS" if rep.passed else "FAIL"
    return out, None, rep.passed


def cmd_dim_sweep(cfg: RunConfig):
    spec = _load_tree_spec(cfg.tree)
    d = load_target(cfg.target)
    series = None
    if spec.get("kind") == "power":
        source = power_counts(spec)
        series = power_counts(spec, SERIES_DEPTH)
    elif spec.get("kind") == "level_counts":
        source = list(spec["counts"])
    else:
        source = tree_from_spec(spec)
    rep = checks.dim_sweep_report(source, d, PercolationParams(cfg.p), parse_alphas(cfg.alphas),
                                  _resolution(cfg, d), tol=cfg.tol, max_iter=cfg.max_iter,
                                  series_counts=series)
    s = rep.sweep
    rows = (["alpha", "capacity"], list(zip(s.alphas.tolist(), s.capacities.tolist())))
    return rep.to_dict(), rows, True


def cmd_betaset(cfg: RunConfig):
    t = tree_from_spec(_load_tree_spec(cfg.tree))
    d = load_target(cfg.target)
    ns = [int(x) for x in cfg.ns.split(",")]
    rep = checks.betaset_report(t, d, PercolationParams(cfg.p), ns, resolution=cfg.resolution,
                                tol=cfg.tol, max_iter=cfg.max_iter)
    out = rep.to_dict()
    out["verdict"] = "PASS" if rep.agree else "FAIL"
    rows = (["n", "normalized_R"], list(zip(rep.ns, rep.normalized_R)))
    return out, rows, rep.agree


def cmd_hps_check(cfg: RunConfig):
    spec = _load_tree_spec(cfg.tree)
    if spec.get("kind") == "power":
        counts = power_counts(spec, max(int(spec["depth"]), cfg.terms or 0))
    else:
        counts = tree_from_spec(spec).level_counts
    v = hps_condition(counts, PercolationParams(cfg.p), cfg.terms)
    return asdict(v), None, True


HANDLERS = {
    "capacity": cmd_capacity,
    "simulate": cmd_simulate,
    "bounds-check": cmd_bounds_check,
    "dim-sweep": cmd_dim_sweep,
    "betaset": cmd_betaset,
    "hps-check": cmd_hps_check,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tree", help="tree spec JSON file")
    common.add_argument("--target", help="target set spec JSON file")
    common.add_argument("--kernel", default="h", choices=["h", "phi", "lyons", "betaset", "riesz"])
    common.add_argument("--p", type=float)
    common.add_argument("--alpha", type=float)
    common.add_argument("--alphas", help="A:B:STEPS")
    common.add_argument("--beta", type=float)
    common.add_argument("--resolution", type=float, help="cell half-width")
    common.add_argument("--tol", type=float, default=1e-8)
    common.add_argument("--max-iter", type=int, default=100_000)
    common.add_argument("--runs", type=int, default=10_000)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--horizon", type=float)
    common.add_argument("--terms", type=int)
    common.add_argument("--ns", default="16,32,64,128,256")
    common.add_argument("--diag-policy", choices=["half_width", "cell_average"])
    common.add_argument("--out")
    common.add_argument("--format", default="json", choices=["json", "csv"])
    parser = argparse.ArgumentParser(prog="dynperc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    fields = {k: v for k, v in vars(ns).items() if k in RunConfig.__dataclass_fields__}
    return RunConfig(**fields)


def run(cfg: RunConfig) -> tuple[str, bool]:
    cfg.validate()
    report, rows, ok = HANDLERS[cfg.command](cfg)
    if cfg.format == "csv":
        if rows is None:
            raise ConfigInvalid(f"{cfg.command} has no CSV output")
        text = io.to_csv(*rows)
    else:
        report = dict(report, config=asdict(cfg), config_hash=io.config_hash(asdict(cfg)), seed=cfg.seed)
        text = io.dumps(report) + "\n"
    return text, ok


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        text, ok = run(cfg)
    except (DynPercError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0 if ok else 2


if __name__ == "__main__":
    sys.exit(main())
