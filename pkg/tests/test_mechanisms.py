"""Mechanism sampler laws and closed-form accounting."""

import math

import numpy as np
import pytest
from scipy import stats

from dpaudit.estimator import rr_accuracy
from dpaudit.mechanisms import (
    GaussianReportConfig,
    PathologicalConfig,
    RRConfig,
    RdpParams,
    ZcdpParams,
    dpsgd_rdp_eps,
    expected_correct_gaussian,
    gaussian_dp_delta,
    gaussian_dp_eps,
    gaussian_report,
    pathological,
    randomized_response,
    rdp_membership_accuracy,
)

LN3 = math.log(3.0)


def fixed_selection(m, seed=0):
    return np.random.default_rng(seed).integers(0, 2, m) * 2 - 1


# ---------------------------------------------------------------------------
# randomized response


def test_rr_fair_coin_at_eps_zero():
    rng = np.random.default_rng(0)
    s = fixed_selection(200_000)
    t = randomized_response(s, 0.0, rng)
    acc = np.mean(t == s)
    assert acc == pytest.approx(0.5, abs=0.005)


def test_rr_large_eps_always_correct():
    rng = np.random.default_rng(1)
    s = fixed_selection(10_000)
    t = randomized_response(s, 30.0, rng)
    assert np.all(t == s)


def test_rr_accuracy_monte_carlo():
    rng = np.random.default_rng(2)
    s = fixed_selection(100_000)
    t = randomized_response(s, LN3, rng)
    assert np.mean(t == s) == pytest.approx(0.75, abs=0.005)


def test_rr_correct_count_is_binomial():
    # DKW band at 99% over 20000 trials of a 50-bit mechanism
    rng = np.random.default_rng(3)
    m, trials = 50, 20_000
    s = fixed_selection(m)
    w = np.empty(trials)
    for k in range(trials):
        w[k] = np.count_nonzero(randomized_response(s, 1.0, rng) == s)
    q = rr_accuracy(1.0)
    grid = np.arange(-1, m + 1)
    ecdf = np.searchsorted(np.sort(w), grid, side="right") / trials
    cdf = stats.binom.cdf(grid, m, q)
    band = math.sqrt(math.log(2.0 / 0.01) / (2.0 * trials))
    assert np.max(np.abs(ecdf - cdf)) <= band


def test_rr_config_validates():
    with pytest.raises(ValueError):
        RRConfig(eps=-0.5)


# ---------------------------------------------------------------------------
# gaussian score release


def test_gaussian_report_noiseless_limit_sorts_cleanly():
    rng = np.random.default_rng(4)
    s = fixed_selection(1000)
    y = gaussian_report(s, GaussianReportConfig(sigma=1e-9), rng)
    assert np.all(np.sign(y) == s)


def test_gaussian_report_clt_mean():
    rng = np.random.default_rng(5)
    s = fixed_selection(100_000)
    y = gaussian_report(s, GaussianReportConfig(sigma=2.0), rng)
    included = y[s == 1]
    assert included.mean() == pytest.approx(1.0, abs=0.02)


def test_gaussian_report_degenerate_selection():
    rng = np.random.default_rng(6)
    s = np.ones(50_000, dtype=int)
    y = gaussian_report(s, GaussianReportConfig(sigma=0.5), rng)
    assert y.mean() == pytest.approx(1.0, abs=0.01)
    assert y.std() == pytest.approx(0.5, abs=0.01)


# ---------------------------------------------------------------------------
# pathological mechanism


def test_pathological_saturated_boost_all_correct():
    # m*delta = r*beta makes the boosted branch deterministic
    cfg = PathologicalConfig(m=100, r=20, eps=0.0, delta=0.01, beta=0.05)
    assert cfg.boost == pytest.approx(1.0)
    rng = np.random.default_rng(7)
    s = fixed_selection(100)
    t = pathological(s, cfg, rng, force_branch=True)
    guessed = t != 0
    assert guessed.sum() == 20
    assert np.all(t[guessed] == s[guessed])


def test_pathological_delta_zero_is_rr_on_subset():
    cfg = PathologicalConfig(m=2000, r=500, eps=LN3, delta=0.0, beta=0.05)
    rng = np.random.default_rng(8)
    s = fixed_selection(2000)
    correct = total = 0
    for _ in range(200):
        t = pathological(s, cfg, rng)
        guessed = t != 0
        total += guessed.sum()
        correct += np.count_nonzero(t[guessed] == s[guessed])
    q = rr_accuracy(LN3)
    se = math.sqrt(q * (1 - q) / total)
    assert correct / total == pytest.approx(q, abs=4 * se)


def test_pathological_branch_accuracy_formula():
    cfg = PathologicalConfig(m=1000, r=100, eps=1.0, delta=1e-4, beta=0.05)
    # boost = m delta / (r beta) = 0.02; accuracy = 0.02 + 0.98 * e/(e+1)
    expected = 0.02 + 0.98 * math.e / (math.e + 1.0)
    assert cfg.branch_accuracy(True) == pytest.approx(expected, rel=1e-12)
    assert cfg.branch_accuracy(False) == pytest.approx(rr_accuracy(1.0),
                                                       rel=1e-12)
    rng = np.random.default_rng(9)
    s = fixed_selection(1000)
    correct = total = 0
    for _ in range(1000):
        t = pathological(s, cfg, rng, force_branch=True)
        guessed = t != 0
        total += guessed.sum()
        correct += np.count_nonzero(t[guessed] == s[guessed])
    se = math.sqrt(expected * (1 - expected) / total)
    assert correct / total == pytest.approx(expected, abs=3 * se)


def test_pathological_config_validates():
    with pytest.raises(ValueError):
        # m*delta > r*beta
        PathologicalConfig(m=1000, r=10, eps=1.0, delta=1e-2, beta=0.05)
    with pytest.raises(ValueError):
        PathologicalConfig(m=10, r=20, eps=1.0, delta=0.0, beta=0.05)


# ---------------------------------------------------------------------------
# gaussian privacy curve


def test_gaussian_dp_delta_known_points():
    assert gaussian_dp_delta(0.5, 4.38) == pytest.approx(1e-5, abs=2e-7)
    assert gaussian_dp_delta(0.5, 2.675) == pytest.approx(0.0039334, abs=5e-5)
    expected = stats.norm.sf(-0.5) - stats.norm.sf(0.5)
    assert gaussian_dp_delta(0.5, 0.0) == pytest.approx(expected, rel=1e-12)
    assert gaussian_dp_delta(0.5, 0.0) == pytest.approx(0.38292, abs=1e-5)


def test_gaussian_dp_delta_monotone():
    eps_grid = np.linspace(0.0, 6.0, 25)
    vals = [gaussian_dp_delta(0.5, float(e)) for e in eps_grid]
    assert np.all(np.diff(vals) < 0)
    rho_grid = [0.1, 0.3, 0.5, 1.0, 2.0]
    vals = [gaussian_dp_delta(r, 1.0) for r in rho_grid]
    assert np.all(np.diff(vals) > 0)


def test_gaussian_dp_delta_validates_and_clamps():
    with pytest.raises(ValueError):
        gaussian_dp_delta(0.0, 1.0)
    with pytest.raises(ValueError):
        gaussian_dp_delta(1.0, -0.1)
    assert 0.0 <= gaussian_dp_delta(50.0, 0.0) <= 1.0


def test_gaussian_dp_eps_known_points():
    assert gaussian_dp_eps(0.5, 1e-5) == pytest.approx(4.38, abs=0.01)
    assert gaussian_dp_eps(0.5, 0.0039334) == pytest.approx(2.675, abs=1e-3)


def test_gaussian_dp_eps_round_trip():
    for rho in [0.1, 0.5, 1.0, 2.0, 5.0]:
        for eps in [0.0, 0.5, 1.0, 2.0, 4.0, 10.0]:
            delta = gaussian_dp_delta(rho, eps)
            if not 0.0 < delta < 1.0:
                continue
            back = gaussian_dp_eps(rho, delta)
            assert back == pytest.approx(eps, abs=1e-6)


def test_gaussian_dp_eps_saturated_delta_returns_zero():
    assert gaussian_dp_eps(0.5, 0.9) == 0.0


# ---------------------------------------------------------------------------
# noisy-SGD accounting


def test_rdp_eps_zero_sampling():
    assert dpsgd_rdp_eps(100, 0.0, 1.0) == 0.0


def test_rdp_eps_closed_form_unit():
    assert dpsgd_rdp_eps(1, 1.0, 1.0) == pytest.approx(1.0, rel=1e-14)


def test_rdp_eps_small_rate_high_precision():
    got = dpsgd_rdp_eps(1000, 0.001, 1.0)
    assert got == pytest.approx(1000 * math.log1p(1e-6 * math.expm1(1.0)),
                                rel=1e-14)
    assert got == pytest.approx(1.7182e-3, abs=1e-7)


def test_rdp_eps_additive_in_steps():
    a = dpsgd_rdp_eps(300, 0.02, 1.3)
    b = dpsgd_rdp_eps(700, 0.02, 1.3)
    assert dpsgd_rdp_eps(1000, 0.02, 1.3) == pytest.approx(a + b, rel=1e-12)


def test_rdp_membership_accuracy_values():
    assert rdp_membership_accuracy(0.0) == 0.5
    assert rdp_membership_accuracy(math.log(5.0)) == pytest.approx(
        0.5 + 0.5 * math.sqrt(0.5), rel=1e-12)
    for x in [1e-4, 1e-3, 0.01, 0.05]:
        approx = 0.5 + math.sqrt(x) / 4.0
        exact = rdp_membership_accuracy(x)
        assert abs((exact - 0.5) - (approx - 0.5)) <= 0.05 * (approx - 0.5)
    assert 0.5 <= rdp_membership_accuracy(30.0) < 1.0
    # saturates to 1.0 only once the gap falls below double precision
    assert rdp_membership_accuracy(800.0) <= 1.0


def test_accounting_records_validate():
    with pytest.raises(ValueError):
        ZcdpParams(rho=-0.1)
    with pytest.raises(ValueError):
        RdpParams(order=1.0, eps_check=0.5)


# ---------------------------------------------------------------------------
# expected correct guesses for the gaussian ideal


def test_expected_correct_gaussian_symmetric_case():
    m = 10_000
    c, v = expected_correct_gaussian(m, m, 2.0)
    assert c == pytest.approx(0.0, abs=1e-9)
    acc = stats.norm.sf(-0.5)
    assert v == math.ceil(m * acc)


def test_expected_correct_gaussian_noiseless():
    _, v = expected_correct_gaussian(1000, 100, 1e-6)
    assert v == 100


def test_expected_correct_gaussian_reference_point():
    _, v = expected_correct_gaussian(100_000, 1510, 2.0)
    assert v == 1439


def test_expected_correct_gaussian_accuracy_improves_with_fewer_guesses():
    m = 100_000

    def conditional_accuracy(r):
        c, _ = expected_correct_gaussian(m, r, 2.0)
        a = stats.norm.sf((c - 1.0) / 2.0)
        b = stats.norm.sf((c + 1.0) / 2.0)
        return a / (a + b)

    accs = [conditional_accuracy(r) for r in [20_000, 5000, 1510, 400, 50]]
    assert np.all(np.diff(accs) > 0)


def test_expected_correct_gaussian_validates():
    with pytest.raises(ValueError):
        expected_correct_gaussian(100, 200, 2.0)
    with pytest.raises(ValueError):
        expected_correct_gaussian(100, 50, 0.0)
