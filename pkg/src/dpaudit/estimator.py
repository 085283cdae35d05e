"""Statistical core for single-run differential privacy audits.

Converts the outcome of one audit run -- out of ``m`` randomized examples,
``r`` membership guesses of which ``v`` were correct -- into a p-value for
the null hypothesis "the mechanism is (eps, delta)-DP", and inverts that
test into a one-sided lower confidence bound on eps.

Under the null, the number of correct guesses is stochastically dominated
by ``Binomial(r, e^eps / (e^eps + 1))`` plus a spillover term whose optimal
weight is the solution of a small linear program; the dual of that program
gives the closed form implemented by :func:`dual_alpha`.  The module also
provides the analytic (Hoeffding) and adaptive-threshold variants of the
bound, the uneven-inclusion-probability generalization, and two spin-off
bounds implied by DP: a generalization-error tail bound and a mutual
information bound.

All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy import special, stats


def rr_accuracy(eps: float) -> float:
    """Per-guess accuracy e^eps / (e^eps + 1) of eps-DP randomized response.

    This is the largest probability with which any eps-DP mechanism can
    correctly guess an independent fair bit of its input.
    """
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    return float(special.expit(eps))


@dataclasses.dataclass(frozen=True)
class PrivacyParams:
    """An (eps, delta) pair under test. eps is in nats."""

    eps: float
    delta: float = 0.0

    def __post_init__(self):
        if not self.eps >= 0:
            raise ValueError(f"eps must be nonnegative, got {self.eps}")
        if not 0 <= self.delta <= 1:
            raise ValueError(f"delta must be in [0, 1], got {self.delta}")


@dataclasses.dataclass(frozen=True)
class GuessSummary:
    """Counts summarizing one audit run.

    Attributes:
      m: Number of randomized examples.
      k_plus: Number of positive (membership) guesses.
      k_minus: Number of negative (non-membership) guesses.
      v: Number of correct guesses.
    """

    m: int
    k_plus: int
    k_minus: int
    v: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"m must be positive, got {self.m}")
        if self.k_plus < 0 or self.k_minus < 0:
            raise ValueError("guess counts must be nonnegative")
        if self.r > self.m:
            raise ValueError(
                f"k_plus + k_minus = {self.r} exceeds m = {self.m}")
        if not 0 <= self.v <= self.r:
            raise ValueError(
                f"v must be in [0, {self.r}], got {self.v}")

    @property
    def r(self) -> int:
        """Total number of guesses (excluding abstentions)."""
        return self.k_plus + self.k_minus


def binomial_sf(n: int, q: float, v: int) -> float:
    """Exact binomial survival probability Pr[Binomial(n, q) >= v].

    Computed via the regularized incomplete beta function, which is
    numerically stable deep into the tails (relative accuracy better than
    1e-12 for n up to 1e6).

    Args:
      n: Number of trials, n >= 0.
      q: Success probability in [0, 1].
      v: Threshold (integer).

    Returns:
      Pr[Binomial(n, q) >= v], exactly 1.0 for v <= 0 and 0.0 for v > n.
    """
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")
    if not 0 <= q <= 1:
        raise ValueError(f"q must be in [0, 1], got {q}")
    if v <= 0:
        return 1.0
    if v > n:
        return 0.0
    return float(stats.binom.sf(v - 1, n, q))


@dataclasses.dataclass(frozen=True)
class DominatingDistribution:
    """An integer-supported distribution that dominates the correct-guess count.

    Stores the survival function Pr[W* >= w] for w = 0..support_max; the
    implicit extension is survival 1 for w <= 0 and 0 for w > support_max.
    """

    support_max: int
    survival_table: np.ndarray  # survival_table[w] = Pr[W* >= w]

    def __post_init__(self):
        table = np.asarray(self.survival_table, dtype=float)
        if table.shape != (self.support_max + 1,):
            raise ValueError("survival table must cover w = 0..support_max")
        if np.any(table < -1e-12) or np.any(table > 1 + 1e-12):
            raise ValueError("survival values must lie in [0, 1]")
        if np.any(np.diff(table) > 1e-12):
            raise ValueError("survival must be nonincreasing")
        if abs(table[0] - 1.0) > 1e-9:
            raise ValueError("survival at 0 must be 1 for nonnegative support")
        table = np.clip(table, 0.0, 1.0)
        table[0] = 1.0
        object.__setattr__(self, "survival_table", table)

    def survival(self, w):
        """Pr[W* >= w] for scalar or array integer w, with tail extension."""
        w = np.asarray(w)
        idx = np.clip(w, 0, self.support_max)
        out = np.where(
            w <= 0, 1.0,
            np.where(w > self.support_max, 0.0, self.survival_table[idx]))
        return float(out) if out.ndim == 0 else out

    @classmethod
    def from_binomial(cls, n: int, q: float) -> "DominatingDistribution":
        """Survival of Binomial(n, q) over its full support."""
        if n < 0:
            raise ValueError(f"n must be nonnegative, got {n}")
        if not 0 <= q <= 1:
            raise ValueError(f"q must be in [0, 1], got {q}")
        table = stats.binom.sf(np.arange(n + 1) - 1, n, q)
        return cls(support_max=n, survival_table=table)

    @classmethod
    def from_pmf(cls, pmf: np.ndarray) -> "DominatingDistribution":
        """Build from a pmf over {0, ..., len(pmf) - 1}.

        The survival is accumulated from the upper tail so the smallest
        terms are summed first.
        """
        pmf = np.asarray(pmf, dtype=float)
        if pmf.ndim != 1 or pmf.size == 0:
            raise ValueError("pmf must be a nonempty 1-d array")
        if np.any(pmf < -1e-12):
            raise ValueError("pmf entries must be nonnegative")
        if abs(pmf.sum() - 1.0) > 1e-9:
            raise ValueError(f"pmf must sum to 1, got {pmf.sum()}")
        table = np.cumsum(pmf[::-1])[::-1]
        return cls(support_max=pmf.size - 1, survival_table=table)


def dual_alpha(dist: DominatingDistribution, v: int, m: int) -> float:
    """Optimal dual coefficient of the delta spillover term.

    Returns max over i in {1, ..., m} of
    (Pr[W* >= v - i] - Pr[W* >= v]) / i, floored at zero.  Together with
    beta = Pr[W* >= v] this is a feasible solution of the dual of the
    linear program that maximizes the probability an adversary can add to
    the event {W >= v} using a nonnegative integer offset of mean at most
    2*m*delta, so beta + alpha * 2*m*delta upper-bounds that probability.

    Args:
      dist: Dominating distribution of the correct-guess count.
      v: Observed threshold (integer).
      m: Number of randomized examples, m >= 1.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    beta = dist.survival(v)
    # For i >= v the numerator is constant (survival(v - i) = 1), so the
    # candidate (1 - beta) / i is maximized at i = v; capping the scan at
    # min(m, max(v, 1)) is exact.
    i = np.arange(1, min(m, max(v, 1)) + 1)
    tails = dist.survival(v - i)
    return float(max(0.0, np.max((tails - beta) / i)))


def _p_value(m: int, r: int, v: int, eps: float, delta: float) -> float:
    q = rr_accuracy(eps)
    dist = DominatingDistribution.from_binomial(r, q)
    beta = dist.survival(v)
    alpha = dual_alpha(dist, v, m)
    return min(1.0, beta + alpha * 2.0 * m * delta)


def p_value_audit(summary: GuessSummary, params: PrivacyParams) -> float:
    """p-value of observing >= v correct guesses under the (eps, delta)-DP null.

    Computes min(1, beta + alpha * 2 * m * delta) where beta is the
    Binomial(r, e^eps/(e^eps+1)) survival at v and alpha is the dual
    spillover coefficient of :func:`dual_alpha` for that binomial.

    Args:
      summary: Counts (m, k_plus, k_minus, v) from one audit run.
      params: The null hypothesis (eps, delta).
    """
    return _p_value(summary.m, summary.r, summary.v, params.eps, params.delta)


def eps_lower_bound(m: int, r: int, v: int, delta: float, beta: float) -> float:
    """Largest eps rejected at failure probability beta; a lower confidence bound.

    Bracket search: grow the upper end by one until the p-value reaches
    beta, then bisect 30 times and return the lower end, which keeps the
    result conservative: p_value(result) < beta, and the p-value crosses
    beta within one terminal bracket width (at most 2**-30 of the bracket).

    Args:
      m: Number of randomized examples.
      r: Number of guesses, v <= r <= m.
      v: Number of correct guesses.
      delta: Fixed delta of the null hypothesis.
      beta: Failure probability (one minus confidence), in (0, 1).

    Returns:
      Lower bound on eps; 0.0 when v is consistent with eps = 0.
    """
    if not 0 <= v <= r <= m:
        raise ValueError(f"need 0 <= v <= r <= m, got v={v} r={r} m={m}")
    if not 0 <= delta <= 1:
        raise ValueError(f"delta must be in [0, 1], got {delta}")
    if not 0 < beta < 1:
        raise ValueError(f"beta must be in (0, 1), got {beta}")
    eps_min = 0.0  # maintain p_value(eps_min) < beta
    eps_max = 1.0  # maintain p_value(eps_max) >= beta
    while _p_value(m, r, v, eps_max, delta) < beta:
        eps_max += 1.0
    for _ in range(30):
        eps = (eps_min + eps_max) / 2
        if _p_value(m, r, v, eps, delta) < beta:
            eps_min = eps
        else:
            eps_max = eps
    return eps_min


@dataclasses.dataclass(frozen=True)
class GeneralPParams:
    """Per-example inclusion probability for the uneven-coin variant."""

    p_incl: float

    def __post_init__(self):
        if not 0 < self.p_incl < 1:
            raise ValueError(f"p_incl must be in (0, 1), got {self.p_incl}")

    def q_plus(self, eps: float) -> float:
        """Accuracy bound p*e^eps / (p*e^eps + 1 - p) for positive guesses."""
        return float(special.expit(eps + special.logit(self.p_incl)))

    def q_minus(self, eps: float) -> float:
        """Accuracy bound (1-p)*e^eps / ((1-p)*e^eps + p) for negative guesses."""
        return float(special.expit(eps - special.logit(self.p_incl)))


def p_value_general_p(m: int, k_plus: int, k_minus: int, v: int,
                      params: PrivacyParams, gp: GeneralPParams) -> float:
    """p-value when each example is included with probability p != 1/2.

    The dominating distribution is the exact integer-support convolution of
    Binomial(k_plus, q_plus) and Binomial(k_minus, q_minus) where the two
    Bernoulli accuracies depend on the inclusion probability.  Collapses to
    :func:`p_value_audit` when p = 1/2.
    """
    if k_plus < 0 or k_minus < 0 or k_plus + k_minus > m:
        raise ValueError(
            f"need 0 <= k_plus + k_minus <= m, got {k_plus}+{k_minus} vs m={m}")
    if not 0 <= v <= k_plus + k_minus:
        raise ValueError(f"v must be in [0, {k_plus + k_minus}], got {v}")
    eps = params.eps
    pmf_plus = stats.binom.pmf(np.arange(k_plus + 1), k_plus, gp.q_plus(eps))
    pmf_minus = stats.binom.pmf(np.arange(k_minus + 1), k_minus, gp.q_minus(eps))
    dist = DominatingDistribution.from_pmf(np.convolve(pmf_plus, pmf_minus))
    beta = dist.survival(v)
    alpha = dual_alpha(dist, v, m)
    return min(1.0, beta + alpha * 2.0 * m * params.delta)


def hoeffding_p_value(m: int, r1: float, r2: float, v: float,
                      params: PrivacyParams) -> float:
    """Analytic p-value from the Hoeffding dominating survival function.

    Uses f(v) = exp(-2 (v - q r1)^2 / r2^2) for v above the mean q*r1 and
    1 below it, where q = e^eps/(e^eps+1), r1 bounds the guess weight
    l1-norm and r2 its l2-norm.  For v >= q r1 + 2 the delta term uses the
    closed form max(2 / (v - q r1), f((v + q r1) / 2)); otherwise it falls
    back to the discrete max over integer offsets.

    Unlike the exact binomial routines, v may be non-integer here.
    """
    if r1 <= 0 or r2 <= 0:
        raise ValueError(f"r1 and r2 must be positive, got {r1}, {r2}")
    q = rr_accuracy(params.eps)
    mean = q * r1

    def f(x):
        x = np.asarray(x, dtype=float)
        out = np.where(x < mean, 1.0, np.exp(-2.0 / r2 ** 2 * (x - mean) ** 2))
        return float(out) if out.ndim == 0 else out

    fv = f(v)
    if params.delta == 0:
        return min(1.0, fv)
    if v >= mean + 2:
        dterm = max(2.0 / (v - mean), f((v + mean) / 2.0))
    else:
        i = np.arange(1, m + 1)
        dterm = max(0.0, float(np.max((f(v - i) - fv) / i)))
    return min(1.0, fv + 2.0 * m * params.delta * dterm)


def adaptive_bound(m: int, r_observed: int, params: PrivacyParams,
                   gamma: float, tau: float) -> tuple[float, float]:
    """Threshold and tail bound that adapt to the realized number of guesses.

    Finds the smallest integer w with Pr[Binomial(r_observed, q) >= w] <=
    gamma, and guarantees Pr[W >= w + tau] <= gamma + 2 m delta / tau under
    the null.  Letting the threshold depend on the observed guess count
    r_observed is what makes the bound adaptive.

    Returns:
      (threshold, p) where threshold = w + tau and p is clamped to 1.
    """
    if not 0 <= gamma <= 1:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    q = rr_accuracy(params.eps)
    dist = DominatingDistribution.from_binomial(r_observed, q)
    below = np.flatnonzero(dist.survival_table <= gamma)
    g = int(below[0]) if below.size else r_observed + 1
    p = min(1.0, gamma + 2.0 * m * params.delta / tau)
    return float(g) + tau, p


def _binomial_survival_real(dist: DominatingDistribution, x: float) -> float:
    # Pr[W >= x] for integer-supported W and real x.
    return dist.survival(math.ceil(x))


def generalization_bound(n: int, params: PrivacyParams,
                         gamma: float, eta: float) -> float:
    """Tail bound on the empirical-vs-population gap of a DP algorithm's output.

    Three-term bound: S1 + 2 exp(-n eta^2 / 2) + max_i (2 n delta / i)
    (S2(i) - S1), where S1 is the Binomial(n, e^eps/(e^eps+1)) survival at
    (1 + gamma - 1.5 eta) n / 2 and S2(i) the survival at the threshold
    minus i.  Requires gamma >= 1.5 eta >= 0.
    """
    if not gamma >= 1.5 * eta >= 0:
        raise ValueError(
            f"need gamma >= 1.5 * eta >= 0, got gamma={gamma} eta={eta}")
    q = rr_accuracy(params.eps)
    dist = DominatingDistribution.from_binomial(n, q)
    return _generalization_bound_from_dist(dist, n, params.delta, gamma, eta)


def _generalization_bound_from_dist(dist, n, delta, gamma, eta):
    thr = math.ceil((1.0 + gamma - 1.5 * eta) * n / 2.0)
    s1 = dist.survival(thr)
    hoeffding = 2.0 * math.exp(-n * eta * eta / 2.0)
    spill = 2.0 * n * delta * dual_alpha(dist, thr, n)
    return min(1.0, s1 + hoeffding + spill)


def prior_generalization_bound(alpha_acc: float, beta_acc: float,
                               params: PrivacyParams, c: float,
                               d: float) -> tuple[float, float]:
    """Earlier generalization guarantee used as a comparison baseline.

    Returns (error, failure) = (alpha_acc + e^eps - 1 + c + 2 d,
    beta_acc / c + delta / d) for free parameters c, d > 0.
    """
    if c <= 0 or d <= 0:
        raise ValueError(f"c and d must be positive, got {c}, {d}")
    error = alpha_acc + math.exp(params.eps) - 1.0 + c + 2.0 * d
    failure = beta_acc / c + params.delta / d
    return error, failure


def optimize_generalization_width(
        n: int, params: PrivacyParams, beta_acc: float,
        target_failure: float, grid_points: int = 200,
        gamma_range: tuple[float, float] = (1e-2, 1.0),
        eta_range: tuple[float, float] = (1e-2, 1.0),
) -> tuple[float, float, float]:
    """Smallest width gamma with beta_acc + generalization_bound <= target.

    Standardized search: a grid_points x grid_points log grid over
    (gamma, eta).  Returns (gamma, eta, achieved_failure).
    """
    q = rr_accuracy(params.eps)
    dist = DominatingDistribution.from_binomial(n, q)
    gammas = np.geomspace(*gamma_range, grid_points)
    etas = np.geomspace(*eta_range, grid_points)
    for g in gammas:
        best = None
        for e in etas[etas <= g / 1.5]:
            fail = beta_acc + _generalization_bound_from_dist(
                dist, n, params.delta, g, e)
            if fail <= target_failure and (best is None or fail < best[2]):
                best = (float(g), float(e), fail)
        if best is not None:
            return best
    raise ValueError("no feasible (gamma, eta) grid point for the target")


def optimize_prior_width(
        params: PrivacyParams, beta_acc: float, target_failure: float,
        grid_points: int = 200,
        c_range: tuple[float, float] = (1e-6, 1.0),
        d_range: tuple[float, float] = (1e-6, 1.0),
) -> tuple[float, float, float]:
    """Smallest baseline width e^eps - 1 + c + 2d with failure <= target.

    Same standardized log-grid search as
    :func:`optimize_generalization_width`.  Returns (width, c, d).
    """
    cs = np.geomspace(*c_range, grid_points)
    ds = np.geomspace(*d_range, grid_points)
    fail = beta_acc / cs[:, None] + params.delta / ds[None, :]
    width = (math.exp(params.eps) - 1.0) + cs[:, None] + 2.0 * ds[None, :]
    feasible = fail <= target_failure
    if not feasible.any():
        raise ValueError("no feasible (c, d) grid point for the target")
    width = np.where(feasible, width, np.inf)
    i, j = np.unravel_index(np.argmin(width), width.shape)
    return float(width[i, j]), float(cs[i]), float(ds[j])


def _binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log(p) - (1.0 - p) * math.log1p(-p)


def mi_bound(n: int, params: PrivacyParams, p_incl: float) -> float:
    """Upper bound (nats) on the mutual information between inclusion bits
    and the output of an (eps, delta)-DP mechanism.

    n delta h(p) + n (1-delta) h((p e^eps + 1 - p) / (e^eps + 1))
    - n (1-delta) (log(1 + e^-eps) + eps / (e^eps + 1)),
    with h the natural-log binary entropy.  At p = 1/2 this is at most
    n delta log 2 + n (1-delta) eps^2 / 8.
    """
    if not 0 < p_incl < 1:
        raise ValueError(f"p_incl must be in (0, 1), got {p_incl}")
    eps, delta = params.eps, params.delta
    mid = (p_incl * math.exp(eps) + 1.0 - p_incl) / (math.exp(eps) + 1.0)
    return (n * delta * _binary_entropy(p_incl)
            + n * (1.0 - delta) * _binary_entropy(mid)
            - n * (1.0 - delta) * (math.log1p(math.exp(-eps))
                                   + eps / (math.exp(eps) + 1.0)))
