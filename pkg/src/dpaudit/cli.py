"""Command-line surface and experiment drivers.

Subcommands:
  pvalue             p-value of an observed guess count under a DP null
  epslb              epsilon lower bound at a confidence level
  experiment-pure    idealized randomized-response sweep over guess counts
  experiment-gaussian idealized Gaussian score release sweep (with upper bound)
  pathological-check Monte-Carlo check of the tail bound on the worst case
  dpsgd-audit        end-to-end audit of a desk-scale DP-SGD run (config file)
  simulate           one audit run of a chosen simulated mechanism

Tables are CSV; reports are line-delimited JSON records that echo their
inputs and seed, so every row can be reproduced.  Exit codes: 0 success,
1 usage error, 2 runtime failure.  DPAUDIT_OUTDIR sets the default output
directory for relative --out paths.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
import time
from typing import Any, Sequence

import numpy as np

from . import dpsgd as dpsgd_mod
from . import mechanisms, pipeline
from .estimator import (GuessSummary, PrivacyParams, eps_lower_bound,
                        p_value_audit, rr_accuracy)

ENV_OUTDIR = "DPAUDIT_OUTDIR"

EXPERIMENT_KINDS = {
    "pure-rr": ("eps", "guesses", "confidence"),
    "gaussian-idealized": ("sigma", "m", "guesses", "deltas", "confidences"),
    "delta-sweep": ("sigma", "m", "guesses", "deltas", "confidences"),
    "pathological-check": ("m", "r", "eps", "delta", "beta", "trials"),
    "dpsgd-audit": ("mode", "m", "dim", "iterations", "clip",
                    "noise_multiplier", "sample_prob", "learning_rate",
                    "delta"),
    "pvalue": ("m", "r", "v", "eps", "delta"),
    "epslb": ("m", "r", "v", "delta", "confidence"),
}


@dataclasses.dataclass
class ExperimentSpec:
    """A validated experiment request: kind, parameters, seed, output path."""

    kind: str
    params: dict[str, Any]
    seed: int = 0
    out: str | None = None

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        missing = [k for k in EXPERIMENT_KINDS[self.kind]
                   if k not in self.params]
        if missing:
            raise ValueError(
                f"{self.kind} experiment missing parameter(s): "
                f"{', '.join(missing)}")


@dataclasses.dataclass
class ResultRow:
    """One persisted result: echoed inputs, outputs, timing, seed."""

    command: str
    inputs: dict[str, Any]
    outputs: dict[str, Any]
    confidence: float | None
    runtime_ms: float
    seed: int | None

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "ResultRow":
        return cls(**json.loads(line))


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 for usage problems, not argparse's 2
        raise _UsageError(message)


def _resolve_out(path: str | None) -> str | None:
    if path is None:
        return None
    outdir = os.environ.get(ENV_OUTDIR)
    if outdir and not os.path.isabs(path):
        os.makedirs(outdir, exist_ok=True)
        return os.path.join(outdir, path)
    return path


def _append_row(row: ResultRow, out: str | None) -> None:
    out = _resolve_out(out)
    if out is None:
        return
    with open(out, "a", encoding="utf-8") as fh:
        fh.write(row.to_json() + "\n")


def _emit_csv(fieldnames: Sequence[str], rows: Sequence[dict],
              out: str | None) -> None:
    out = _resolve_out(out)
    sink = open(out, "w", newline="", encoding="utf-8") if out else sys.stdout
    try:
        writer = csv.DictWriter(sink, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if out:
            sink.close()


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _doubling_grid(lo: int, hi: int) -> list[int]:
    grid, r = [], lo
    while r <= hi:
        grid.append(r)
        r *= 2
    return grid


def cmd_pvalue(args) -> int:
    t0 = time.perf_counter()
    summary = GuessSummary(m=args.m, k_plus=args.r, k_minus=0, v=args.v)
    p = p_value_audit(summary, PrivacyParams(args.eps, args.delta))
    print(f"{p:.6g}")
    row = ResultRow(
        command="pvalue",
        inputs={"m": args.m, "r": args.r, "v": args.v, "eps": args.eps,
                "delta": args.delta},
        outputs={"p_value": p}, confidence=None,
        runtime_ms=(time.perf_counter() - t0) * 1e3, seed=None)
    _append_row(row, args.out)
    return 0


def cmd_epslb(args) -> int:
    t0 = time.perf_counter()
    lb = eps_lower_bound(args.m, args.r, args.v, args.delta,
                         1.0 - args.conf)
    print(f"{lb:.6g}")
    row = ResultRow(
        command="epslb",
        inputs={"m": args.m, "r": args.r, "v": args.v, "delta": args.delta,
                "conf": args.conf},
        outputs={"eps_lb": lb}, confidence=args.conf,
        runtime_ms=(time.perf_counter() - t0) * 1e3, seed=None)
    _append_row(row, args.out)
    return 0


def cmd_experiment_pure(args) -> int:
    guesses = _int_list(args.guesses)
    ExperimentSpec(kind="pure-rr",
                   params={"eps": args.eps, "guesses": guesses,
                           "confidence": args.conf})
    q = rr_accuracy(args.eps)
    rows = []
    for r in guesses:
        v = math.floor(r * q)
        lb = eps_lower_bound(r, r, v, 0.0, 1.0 - args.conf)
        rows.append({"r": r, "v": v, "eps_lb": f"{lb:.6g}"})
    _emit_csv(["r", "v", "eps_lb"], rows, args.out)
    return 0


def cmd_experiment_gaussian(args) -> int:
    guesses = _int_list(args.r_grid)
    deltas = _float_list(args.delta_grid)
    confs = _float_list(args.conf_grid)
    ExperimentSpec(kind="gaussian-idealized",
                   params={"sigma": args.sigma, "m": args.m,
                           "guesses": guesses, "deltas": deltas,
                           "confidences": confs})
    cfg = mechanisms.GaussianReportConfig(sigma=args.sigma,
                                          sensitivity=args.sensitivity)
    uppers = {d: mechanisms.gaussian_dp_eps(cfg.rho, d) for d in deltas}
    rows = []
    for r in guesses:
        _, v = mechanisms.expected_correct_gaussian(args.m, r, args.sigma)
        for d in deltas:
            for conf in confs:
                lb = eps_lower_bound(args.m, r, v, d, 1.0 - conf)
                rows.append({
                    "r": r, "v": v, "delta": f"{d:g}", "confidence": conf,
                    "eps_lb": f"{lb:.6g}", "eps_upper": f"{uppers[d]:.6g}",
                })
    _emit_csv(["r", "v", "delta", "confidence", "eps_lb", "eps_upper"],
              rows, args.out)
    return 0


def cmd_pathological_check(args) -> int:
    cfg = mechanisms.PathologicalConfig(m=args.m, r=args.r, eps=args.eps,
                                        delta=args.delta, beta=args.beta)
    spec = ExperimentSpec(
        kind="pathological-check", seed=args.seed,
        params={"m": args.m, "r": args.r, "eps": args.eps,
                "delta": args.delta, "beta": args.beta,
                "trials": args.trials})
    t0 = time.perf_counter()
    rng = np.random.default_rng(args.seed)
    w_samples = np.empty(args.trials, dtype=int)
    for k in range(args.trials):
        s = pipeline.sample_selection(args.m, rng)
        t = mechanisms.pathological(s, cfg, rng)
        w_samples[k] = pipeline.count_correct(s, t)
    params = PrivacyParams(args.eps, args.delta)
    rows, worst_z = [], -math.inf
    for v in range(args.r + 1):
        phat = float(np.mean(w_samples >= v))
        bound = p_value_audit(
            GuessSummary(m=args.m, k_plus=args.r, k_minus=0, v=v), params)
        se = math.sqrt(bound * (1.0 - bound) / args.trials)
        z = (phat - bound) / se if se > 0 else (math.inf if phat > bound else 0.0)
        worst_z = max(worst_z, z)
        rows.append({"v": v, "mc_tail": f"{phat:.6g}",
                     "bound": f"{bound:.6g}", "z": f"{z:.3f}"})
    violations = sum(1 for row in rows if float(row["z"]) > 3.0)
    if args.out:
        _emit_csv(["v", "mc_tail", "bound", "z"], rows, args.out)
    print(f"trials={args.trials} max_z={worst_z:.3f} "
          f"violations_beyond_3sigma={violations}")
    _append_row(ResultRow(
        command="pathological-check", inputs=spec.params,
        outputs={"max_z": worst_z, "violations": violations},
        confidence=None, runtime_ms=(time.perf_counter() - t0) * 1e3,
        seed=args.seed), args.report)
    return 0


def _parse_config_file(path: str) -> dict[str, str]:
    raw = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(
                    f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            raw[key] = value
    return raw


_DPSGD_KEYS = {
    "mode": str, "loss": str, "m": int, "dim": int, "iterations": int,
    "clip": float, "noise_multiplier": float, "sample_prob": float,
    "learning_rate": float, "delta": float, "confidence": _float_list,
    "k_plus": int, "k_minus": int, "seed": int, "data_examples": int,
    "label_noise": float, "out": str, "trace_out": str,
}

_DPSGD_DEFAULTS = {
    "loss": "canary-only", "confidence": [0.95], "seed": 0,
    "data_examples": 0, "label_noise": 0.0,
}


def parse_dpsgd_config(path: str) -> dict[str, Any]:
    """Parse and type-check a flat key=value config; errors name the key."""
    raw = _parse_config_file(path)
    config: dict[str, Any] = dict(_DPSGD_DEFAULTS)
    for key, value in raw.items():
        if key not in _DPSGD_KEYS:
            raise ValueError(f"unknown config key {key!r}")
        try:
            config[key] = _DPSGD_KEYS[key](value)
        except ValueError as exc:
            raise ValueError(f"bad value for config key {key!r}: {exc}")
    spec = ExperimentSpec(kind="dpsgd-audit", params=config,
                          seed=config.get("seed", 0),
                          out=config.get("out"))
    if config["mode"] not in ("whitebox", "blackbox"):
        raise ValueError(f"config key 'mode' must be whitebox or blackbox, "
                         f"got {config['mode']!r}")
    return spec.params


def run_dpsgd_audit(config: dict[str, Any]) -> pipeline.AuditReport:
    """Train once with selection-gated canaries, score, and estimate.

    Model and canary construction use a seed stream disjoint from the
    selection coins and training noise, so the audited randomness is
    independent of the setup.
    """
    cfg = dpsgd_mod.TrainerConfig(
        ell=config["iterations"], clip=config["clip"],
        noise_multiplier=config["noise_multiplier"],
        sample_prob=config["sample_prob"],
        learning_rate=config["learning_rate"], dim=config["dim"])
    seed = config["seed"]
    delta = config["delta"]
    setup_rng = np.random.default_rng([seed, 1])
    audit_rng = np.random.default_rng(seed)
    m = config["m"]
    if config["loss"] == "canary-only":
        model = dpsgd_mod.LossModel.canary_only(cfg.dim)
    else:
        model = dpsgd_mod.LossModel.synthetic(
            config["loss"], config["data_examples"], cfg.dim, setup_rng,
            label_noise=config["label_noise"])
    whitebox = config["mode"] == "whitebox"
    if whitebox:
        canaries = dpsgd_mod.dirac_canaries(m, cfg.dim, cfg.clip, setup_rng)
    else:
        if config["loss"] == "canary-only":
            raise ValueError(
                "config key 'loss' must be logistic or linear in blackbox mode")
        canaries = dpsgd_mod.mislabeled_canaries(model, m, setup_rng)

    s = pipeline.sample_selection(m, audit_rng)
    trace = dpsgd_mod.dpsgd_train(model, canaries, s, cfg, audit_rng)
    if "trace_out" in config:
        dpsgd_mod.save_trace(trace, cfg, _resolve_out(config["trace_out"]))
    if whitebox:
        y = dpsgd_mod.whitebox_scores(canaries, trace, cfg)
    else:
        y = dpsgd_mod.blackbox_scores(canaries, trace, model)

    confidences = config["confidence"]
    sweep_caveat = False
    if "k_plus" in config or "k_minus" in config:
        k_plus = config.get("k_plus", 0)
        k_minus = config.get("k_minus", 0)
        t = pipeline.make_guesses(y, k_plus, k_minus)
        v = pipeline.count_correct(s, t)
    else:
        # No guess budget given: sweep doublings and keep the best point,
        # which is multiple testing; the caveat is recorded in the report.
        grid = [(r // 2, r - r // 2) for r in _doubling_grid(2, m)]
        sweep = pipeline.k_sweep(y, s, grid, delta, confidences[0])
        k_plus, k_minus, v = sweep.best.k_plus, sweep.best.k_minus, sweep.best.v
        sweep_caveat = True
    summary = GuessSummary(m=m, k_plus=k_plus, k_minus=k_minus, v=v)
    eps_lb = {conf: eps_lower_bound(m, summary.r, v, delta, 1.0 - conf)
              for conf in confidences}
    p_values = {e: p_value_audit(summary, PrivacyParams(e, delta))
                for e in pipeline.DEFAULT_EPS_GRID}
    report = pipeline.AuditReport(
        summary=summary, eps_lb=eps_lb, p_values=p_values, seed=seed,
        config={
            "mechanism": f"dpsgd-{config['mode']}",
            "multiple_testing_caveat": sweep_caveat,
            "dpsgd": dataclasses.asdict(cfg),
            "loss": config["loss"],
            "delta": delta,
            "theoretical_eps_upper": dpsgd_mod.theoretical_eps_upper(cfg, delta),
            "accounting": dataclasses.asdict(dpsgd_mod.privacy_accounting(cfg)),
        })
    return report


def cmd_dpsgd_audit(args) -> int:
    config = parse_dpsgd_config(args.config)
    t0 = time.perf_counter()
    report = run_dpsgd_audit(config)
    runtime_ms = (time.perf_counter() - t0) * 1e3
    payload = report.to_dict()
    print(json.dumps(payload, sort_keys=True))
    _append_row(ResultRow(
        command="dpsgd-audit", inputs=dict(config), outputs=payload,
        confidence=config["confidence"][0], runtime_ms=runtime_ms,
        seed=config["seed"]), config.get("out") or args.out)
    return 0


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    if args.mechanism == "rr":
        adapter = pipeline.adapter_randomized_response(args.eps)
    elif args.mechanism == "gaussian":
        adapter = pipeline.adapter_gaussian_report(
            mechanisms.GaussianReportConfig(sigma=args.sigma),
            delta=args.delta)
    elif args.mechanism == "pathological":
        adapter = pipeline.adapter_pathological(
            mechanisms.PathologicalConfig(
                m=args.m, r=args.r, eps=args.eps,
                delta=args.mech_delta, beta=args.beta))
    else:
        raise ValueError(f"unknown mechanism {args.mechanism!r}")
    report = pipeline.audit_run(adapter, args.m, args.k_plus, args.k_minus,
                                args.delta, [args.conf], args.seed)
    payload = report.to_dict()
    print(json.dumps(payload, sort_keys=True))
    _append_row(ResultRow(
        command="simulate",
        inputs={"mechanism": args.mechanism, "m": args.m,
                "k_plus": args.k_plus, "k_minus": args.k_minus,
                "delta": args.delta, "conf": args.conf},
        outputs=payload, confidence=args.conf,
        runtime_ms=(time.perf_counter() - t0) * 1e3, seed=args.seed),
        args.out)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="dpaudit",
                     description="Single-run differential privacy auditing")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pvalue", help="p-value under an (eps, delta)-DP null")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--v", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_pvalue)

    p = sub.add_parser("epslb", help="epsilon lower bound at a confidence")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--v", type=int, required=True)
    p.add_argument("--delta", type=float, default=1e-5)
    p.add_argument("--conf", type=float, default=0.95)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_epslb)

    p = sub.add_parser("experiment-pure",
                       help="randomized-response ideal: eps_lb vs guesses")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--guesses", default=",".join(
        str(r) for r in _doubling_grid(10, 10240)))
    p.add_argument("--conf", type=float, default=0.95)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_experiment_pure)

    p = sub.add_parser("experiment-gaussian",
                       help="Gaussian score release ideal: eps_lb vs guesses")
    p.add_argument("--sigma", type=float, default=2.0)
    p.add_argument("--sensitivity", type=float, default=2.0)
    p.add_argument("--m", type=int, default=100_000)
    p.add_argument("--r-grid", default=",".join(
        str(r) for r in _doubling_grid(2, 16384)))
    p.add_argument("--delta-grid", default="1e-5")
    p.add_argument("--conf-grid", default="0.95")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_experiment_gaussian)

    p = sub.add_parser("pathological-check",
                       help="Monte-Carlo validation of the tail bound")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="CSV of per-threshold tails")
    p.add_argument("--report", default=None, help="JSONL result row")
    p.set_defaults(func=cmd_pathological_check)

    p = sub.add_parser("dpsgd-audit",
                       help="audit a desk-scale DP-SGD run from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_dpsgd_audit)

    p = sub.add_parser("simulate", help="one audit run of a toy mechanism")
    p.add_argument("--mechanism", choices=("rr", "gaussian", "pathological"),
                   required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--k-plus", type=int, default=0)
    p.add_argument("--k-minus", type=int, default=0)
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=2.0)
    p.add_argument("--r", type=int, default=0)
    p.add_argument("--mech-delta", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=0.05)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--conf", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        print(parser.format_usage(), file=sys.stderr, end="")
        return 1
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures exit 2
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
