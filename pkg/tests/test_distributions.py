import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from graphclass import distributions as dist
from graphclass.distributions import (
    D_MAX,
    SmoothedTable,
    ZeroInflatedDiscreteLogNormal,
    ZeroInflatedTruncPowerLaw,
    chi2_sf,
    chi_square_gof,
    fit_zero_inflated,
    multinomial_log_pmf,
    positive_log_likelihood,
    sample_degrees,
)


def compositions(d, K):
    for cut in itertools.combinations(range(d + K - 1), K - 1):
        bounds = (-1,) + cut + (d + K - 1,)
        yield tuple(bounds[i + 1] - bounds[i] - 1 for i in range(K))


def test_multinomial_examples():
    assert multinomial_log_pmf([0, 0], 0, [0.3, 0.7]) == 0.0
    assert multinomial_log_pmf([2, 1], 3, [0.5, 0.5]) == pytest.approx(math.log(0.375), abs=1e-14)
    assert multinomial_log_pmf([2, 1], 3, [0.5, 0.5]) == pytest.approx(-0.98083, abs=1e-5)
    assert multinomial_log_pmf([2, 1], 4, [0.5, 0.5]) == -math.inf
    assert multinomial_log_pmf([1, 1], 2, [1.0, 0.0]) == -math.inf


@given(st.integers(1, 4), st.integers(0, 6), st.integers(0, 2**32 - 1))
def test_multinomial_against_scipy_and_sums_to_one(K, d, seed):
    theta = np.random.default_rng(seed).dirichlet(np.ones(K))
    total = []
    for z in compositions(d, K):
        ours = multinomial_log_pmf(z, d, theta)
        assert ours == pytest.approx(stats.multinomial.logpmf(z, d, theta), rel=1e-12, abs=1e-12)
        total.append(math.exp(ours))
    assert abs(math.fsum(total) - 1.0) <= 1e-12


def _powerlaw(beta, kappa, lam):
    return ZeroInflatedTruncPowerLaw(beta, kappa=kappa, lam=lam)


def _lognormal(beta, mu, sigma):
    return ZeroInflatedDiscreteLogNormal(beta, mu=mu, sigma=sigma)


@settings(max_examples=15)
@given(st.floats(0.01, 0.99), st.floats(0.05, 20.0), st.floats(1e-3, 20.0))
def test_powerlaw_normalised(beta, kappa, lam):
    assert abs(math.fsum(_powerlaw(beta, kappa, lam).pmf_table()) - 1.0) <= 1e-9


@settings(max_examples=15)
@given(st.floats(0.01, 0.99), st.floats(-2.0, 5.0), st.floats(0.05, 2.0))
def test_lognormal_normalised(beta, mu, sigma):
    assert abs(math.fsum(_lognormal(beta, mu, sigma).pmf_table()) - 1.0) <= 1e-9


def test_zero_mass_is_beta():
    for d in (_powerlaw(0.3, 1.5, 0.1), _lognormal(0.3, 1.0, 0.8)):
        assert d.log_pmf(0) == pytest.approx(math.log(0.3), abs=1e-15)


def test_powerlaw_ratio_by_hand():
    d = _powerlaw(0.5, 1.0, 1.0)
    assert math.exp(d.log_pmf(1) - d.log_pmf(2)) == pytest.approx(2 * math.e, rel=1e-12)


def test_lognormal_shape_by_hand():
    d = _lognormal(0.2, 0.5, 0.7)
    w = [math.exp(-(math.log(k) - 0.5) ** 2 / (2 * 0.49)) / (0.7 * k) for k in (1, 3)]
    assert math.exp(d.log_pmf(1) - d.log_pmf(3)) == pytest.approx(w[0] / w[1], rel=1e-12)


def test_table_clamps_beyond_support():
    t = SmoothedTable(np.array([0.5, 0.3, 0.2]), 0.0)
    assert t.log_pmf(7) == t.log_pmf(2) == pytest.approx(math.log(0.2))
    assert abs(t.pmf_table().sum() - 1.0) <= 1e-12


def test_fit_all_zero_is_degenerate():
    d = fit_zero_inflated(np.zeros(30, dtype=int), dist.POWERLAW)
    assert d.beta == 1.0 and d.degenerate
    assert d.log_pmf(0) == 0.0


def test_fit_empty_raises():
    with pytest.raises(ValueError):
        fit_zero_inflated(np.array([], dtype=int), dist.LOGNORMAL)


@pytest.mark.parametrize("family, truth", [
    (dist.POWERLAW, _powerlaw(0.3, 1.5, 0.1)),
    (dist.LOGNORMAL, _lognormal(0.4, 1.0, 0.8)),
])
def test_fit_beats_every_grid_point(family, truth):
    samples = sample_degrees(truth, 5000, np.random.default_rng(1))
    fitted = fit_zero_inflated(samples, family)
    assert fitted.beta == pytest.approx(np.mean(samples == 0), abs=1e-15)
    best = positive_log_likelihood(samples, fitted)
    for x in dist.grid_points(family):
        probe = dist._make(family, fitted.beta, x)
        assert best >= positive_log_likelihood(samples, probe) - 1e-9
    again = fit_zero_inflated(samples, family)
    assert again.params == fitted.params


@pytest.mark.parametrize("statistic, dof, p, digits, decision", [
    (12.109, 11, 0.35, 2, "accept"),
    (25.5, 11, 0.007, 3, "reject"),
    (14.36, 11, 0.21, 2, "accept"),
])
def test_reported_decisions(statistic, dof, p, digits, decision):
    value = chi2_sf(statistic, dof)
    # the reported p-values are truncated, not rounded, to the printed digits
    assert math.floor(value * 10**digits) == round(p * 10**digits)
    assert ("accept" if value > 0.05 else "reject") == decision


@given(st.floats(0.0, 100.0), st.integers(1, 30))
def test_chi2_sf_against_incomplete_gamma(statistic, dof):
    oracle = mpmath.gammainc(dof / 2.0, statistic / 2.0, mpmath.inf, regularized=True)
    assert chi2_sf(statistic, dof) == pytest.approx(float(oracle), abs=1e-8)


def test_gof_requires_twenty_samples():
    with pytest.raises(ValueError):
        chi_square_gof(np.ones(19, dtype=int), _powerlaw(0.3, 1.5, 0.1))


def test_gof_too_few_cells_is_inconclusive():
    r = chi_square_gof(np.ones(200, dtype=int), _powerlaw(0.3, 1.5, 0.1), n_fitted_params=14)
    assert r.inconclusive and r.accepted is None and r.decision() == "inconclusive"


@settings(max_examples=25)
@given(st.integers(20, 3000), st.integers(0, 2**32 - 1), st.sampled_from([dist.POWERLAW, dist.LOGNORMAL]))
def test_gof_cell_invariants(n, seed, family):
    truth = _powerlaw(0.3, 1.5, 0.1) if family == dist.POWERLAW else _lognormal(0.4, 1.0, 0.8)
    samples = sample_degrees(truth, n, np.random.default_rng(seed))
    r = chi_square_gof(samples, truth)
    k = r.n_cells
    assert r.observed.sum() == n
    assert r.expected.sum() == pytest.approx(n, rel=1e-9)
    assert r.lower[0] == 0 and r.upper[-1] == D_MAX
    assert np.all(r.lower[1:] == r.upper[:-1] + 1)
    assert k <= 15
    assert r.dof == k - 1 - 3
    if not r.inconclusive:
        assert np.all(r.expected >= 1) and np.sum(r.expected < 5) <= 0.2 * k
        assert r.accepted == (r.p_value > 0.05)


def test_gof_fifteen_cells_at_scale():
    truth = _powerlaw(0.3, 1.5, 0.1)
    r = chi_square_gof(sample_degrees(truth, 5000, np.random.default_rng(0)), truth)
    assert r.n_cells == 15 and r.dof == 11
    assert len(r.cell_rows()) == 16
    assert r.summary_line(1, "powerlaw").split("\t")[-1] in ("accept", "reject")


def test_gof_flags_wrong_family():
    samples = sample_degrees(_lognormal(0.1, 2.5, 0.3), 3000, np.random.default_rng(5))
    r = chi_square_gof(samples, _powerlaw(0.1, 1.5, 0.1))
    assert r.decision() == "reject"
