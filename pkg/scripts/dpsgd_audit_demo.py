#!/usr/bin/env python3
"""End-to-end white-box audit of a canary-only noisy-SGD run.

Defaults match the calibrated desk-scale setting: 100 full-batch steps at
noise multiplier 10 (concentrated-DP parameter 0.5, upper bound about 4.38
at delta = 1e-5) with 5000 one-hot canaries.  A single run typically
certifies a lower bound between 1.5 and 2.7 at 95% confidence.

Usage: python scripts/dpsgd_audit_demo.py [--m 5000] [--seed 0]
"""

import argparse
import json

from dpaudit.cli import run_dpsgd_audit


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--m", type=int, default=5000)
    parser.add_argument("--iterations", type=int, default=100)
    parser.add_argument("--noise-multiplier", type=float, default=10.0)
    parser.add_argument("--delta", type=float, default=1e-5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    config = {
        "mode": "whitebox",
        "loss": "canary-only",
        "m": args.m,
        "dim": args.m,
        "iterations": args.iterations,
        "clip": 1.0,
        "noise_multiplier": args.noise_multiplier,
        "sample_prob": 1.0,
        "learning_rate": 0.1,
        "delta": args.delta,
        "confidence": [0.95],
        "seed": args.seed,
        "data_examples": 0,
        "label_noise": 0.0,
    }
    report = run_dpsgd_audit(config)
    print(json.dumps(report.to_dict(), sort_keys=True, indent=2))
    upper = report.config["theoretical_eps_upper"]
    lb = report.eps_lb[0.95]
    print(f"\neps lower bound (95%): {lb:.4f}")
    print(f"theoretical upper bound at delta={args.delta:g}: {upper:.4f}")


if __name__ == "__main__":
    main()
