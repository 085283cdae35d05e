"""Simulated DP mechanisms used as audit targets, plus closed-form accounting.

The samplers (randomized response, Gaussian score release, and the
worst-case mechanism that concentrates its delta budget on a rare event)
are the idealized targets against which the estimator is validated: their
guess-accuracy laws are known exactly, so audit validity and tightness can
be checked by Monte Carlo.  The accounting functions give the matching
upper bounds: the exact Gaussian privacy curve, the order-2 Renyi bound
for subsampled noisy SGD, and the balanced membership-inference accuracy
ceiling it implies.

Samplers take an explicit seeded generator; accounting functions are pure.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy import optimize, stats

from .estimator import rr_accuracy


@dataclasses.dataclass(frozen=True)
class RRConfig:
    """Randomized response flipping each guess with probability 1/(e^eps+1)."""

    eps: float

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError(f"eps must be nonnegative, got {self.eps}")


@dataclasses.dataclass(frozen=True)
class GaussianReportConfig:
    """Release each selection bit plus N(0, sigma^2) noise.

    sensitivity is the score change when one bit flips (2 for a +-1 flip).
    """

    sigma: float
    sensitivity: float = 2.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.sensitivity <= 0:
            raise ValueError(
                f"sensitivity must be positive, got {self.sensitivity}")

    @property
    def rho(self) -> float:
        """Concentrated-DP parameter sensitivity^2 / (2 sigma^2)."""
        return self.sensitivity ** 2 / (2.0 * self.sigma ** 2)


@dataclasses.dataclass(frozen=True)
class PathologicalConfig:
    """Worst-case guesser: boosted accuracy on a rare event of probability beta.

    With probability beta, each of the r guesses is correct with probability
    m*delta/(r*beta) + (1 - m*delta/(r*beta)) * e^eps/(e^eps+1); otherwise
    with the plain randomized-response accuracy.  Requires m*delta <= r*beta
    (delta = 0 degenerates to randomized response on the guessed subset).
    """

    m: int
    r: int
    eps: float
    delta: float
    beta: float

    def __post_init__(self):
        if not 0 < self.r <= self.m:
            raise ValueError(f"need 0 < r <= m, got r={self.r} m={self.m}")
        if self.eps < 0:
            raise ValueError(f"eps must be nonnegative, got {self.eps}")
        if not 0 <= self.delta <= 1:
            raise ValueError(f"delta must be in [0, 1], got {self.delta}")
        if not 0 <= self.beta <= 1:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if self.m * self.delta > self.r * self.beta:
            raise ValueError(
                f"need m*delta <= r*beta, got {self.m * self.delta} > "
                f"{self.r * self.beta}")

    @property
    def boost(self) -> float:
        """Extra correctness probability m*delta/(r*beta) on the rare branch."""
        if self.delta == 0:
            return 0.0
        return self.m * self.delta / (self.r * self.beta)

    def branch_accuracy(self, x: bool) -> float:
        """Per-guess correctness probability conditioned on the branch."""
        q = rr_accuracy(self.eps)
        return self.boost + (1.0 - self.boost) * q if x else q


@dataclasses.dataclass(frozen=True)
class ZcdpParams:
    """Zero-concentrated DP parameter record."""

    rho: float

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError(f"rho must be nonnegative, got {self.rho}")


@dataclasses.dataclass(frozen=True)
class RdpParams:
    """Renyi DP parameter record (order, eps_check)."""

    order: float
    eps_check: float

    def __post_init__(self):
        if self.order <= 1:
            raise ValueError(f"order must exceed 1, got {self.order}")
        if self.eps_check < 0:
            raise ValueError(
                f"eps_check must be nonnegative, got {self.eps_check}")


def randomized_response(s: np.ndarray, eps: float,
                        rng: np.random.Generator) -> np.ndarray:
    """Guess each selection bit correctly with probability e^eps/(e^eps+1).

    Returns a full guess vector (no abstentions); this is the worst-case
    (eps, 0)-DP mechanism for the audit.
    """
    s = np.asarray(s)
    q = rr_accuracy(eps)
    keep = rng.random(s.shape[0]) < q
    return np.where(keep, s, -s)


def gaussian_report(s: np.ndarray, cfg: GaussianReportConfig,
                    rng: np.random.Generator) -> np.ndarray:
    """Release s_i + N(0, sigma^2) per coordinate."""
    s = np.asarray(s, dtype=float)
    return s + rng.normal(0.0, cfg.sigma, size=s.shape[0])


def pathological(s: np.ndarray, cfg: PathologicalConfig,
                 rng: np.random.Generator,
                 force_branch: bool | None = None) -> np.ndarray:
    """Run the boosted-accuracy mechanism; 0 (abstain) outside the guessed set.

    force_branch conditions the rare-event coin (True: boosted branch,
    False: plain branch) so per-branch accuracy can be tested directly.
    """
    s = np.asarray(s)
    if s.shape[0] != cfg.m:
        raise ValueError(f"selection length {s.shape[0]} != m = {cfg.m}")
    guessed = rng.choice(cfg.m, size=cfg.r, replace=False)
    x = bool(rng.random() < cfg.beta) if force_branch is None else force_branch
    acc = cfg.branch_accuracy(x)
    t = np.zeros(cfg.m, dtype=s.dtype)
    correct = rng.random(cfg.r) < acc
    t[guessed] = np.where(correct, s[guessed], -s[guessed])
    return t


def gaussian_dp_delta(rho: float, eps: float) -> float:
    """Exact delta of the privacy curve of a Gaussian mechanism with given rho.

    delta(eps) = Phibar((eps - rho) / sqrt(2 rho))
                 - e^eps * Phibar((eps + rho) / sqrt(2 rho)),
    where Phibar is the standard normal survival function.  The e^eps
    factor is applied in log space to avoid overflow; the result is clamped
    to [0, 1] and strictly decreasing in eps.
    """
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    scale = math.sqrt(2.0 * rho)
    hi = stats.norm.sf((eps - rho) / scale)
    lo = math.exp(eps + stats.norm.logsf((eps + rho) / scale))
    return min(1.0, max(0.0, hi - lo))


def gaussian_dp_eps(rho: float, delta: float) -> float:
    """Invert the Gaussian privacy curve: smallest eps with delta(eps) <= delta.

    The curve is strictly decreasing in eps so the root is unique; solved
    to well below 1e-6 in eps.  Returns 0 when even eps = 0 already
    achieves the requested delta.
    """
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    if gaussian_dp_delta(rho, 0.0) <= delta:
        return 0.0
    hi = 1.0
    while gaussian_dp_delta(rho, hi) > delta:
        hi *= 2.0
    return float(optimize.brentq(
        lambda e: gaussian_dp_delta(rho, e) - delta, 0.0, hi, xtol=1e-9))


def dpsgd_rdp_eps(ell: int, q: float, sigma: float) -> float:
    """Order-2 Renyi privacy of ell noisy-SGD steps with sampling rate q.

    eps_check = ell * log(1 + q^2 * (exp(1/sigma^2) - 1)), additive in ell.
    """
    if ell < 1:
        raise ValueError(f"ell must be >= 1, got {ell}")
    if not 0 <= q <= 1:
        raise ValueError(f"q must be in [0, 1], got {q}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if q == 0:
        return 0.0
    return ell * math.log1p(q * q * math.expm1(1.0 / (sigma * sigma)))


def rdp_membership_accuracy(eps_check: float) -> float:
    """Balanced membership-inference accuracy ceiling under (2, eps_check)-RDP.

    1/2 + 1/2 * sqrt((e^x - 1) / (e^x + 3)), evaluated in the
    overflow-free form (1 - e^-x) / (1 + 3 e^-x).
    """
    if eps_check < 0:
        raise ValueError(f"eps_check must be nonnegative, got {eps_check}")
    ratio = -math.expm1(-eps_check) / (1.0 + 3.0 * math.exp(-eps_check))
    return 0.5 + 0.5 * math.sqrt(ratio)


def expected_correct_gaussian(m: int, r: int, sigma: float) -> tuple[float, int]:
    """Deterministic guess count for the idealized Gaussian score release.

    Solves for the score threshold c with Pr[S + xi > c] = r / (2m), where
    S is uniform on {-1, +1} and xi ~ N(0, sigma^2) (the two-component
    mixture tail is strictly decreasing, solved by bisection to 1e-12), and
    returns c together with v = ceil(r * Pr[S = +1 | S + xi > c]).

    This is the number of correct guesses an auditor making the r most
    extreme guesses on m examples should expect.
    """
    if not 0 < r <= m:
        raise ValueError(f"need 0 < r <= m, got r={r} m={m}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    target = r / (2.0 * m)

    def mixture_tail(c):
        return 0.5 * (stats.norm.sf((c - 1.0) / sigma)
                      + stats.norm.sf((c + 1.0) / sigma))

    lo = 0.0  # mixture_tail(0) = 1/2 >= target since r <= m
    hi = 1.0 + sigma * stats.norm.isf(target)
    if hi <= lo:
        hi = lo + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        t = mixture_tail(mid)
        if abs(t - target) <= 1e-12:
            lo = hi = mid
            break
        if t >= target:
            lo = mid
        else:
            hi = mid
    c = 0.5 * (lo + hi)
    plus = stats.norm.sf((c - 1.0) / sigma)
    minus = stats.norm.sf((c + 1.0) / sigma)
    accuracy = plus / (plus + minus)
    return float(c), int(math.ceil(r * accuracy))
