"""Probability mass functions, zero-inflated degree fits and chi-squared goodness of fit.

Degree distributions come in three flavours:

* :class:`SmoothedTable` -- additively smoothed frequencies over ``0..d_max``;
* :class:`ZeroInflatedTruncPowerLaw` -- mass ``beta`` at zero and
  ``d**-kappa * exp(-lambda*d)`` on the positive integers;
* :class:`ZeroInflatedDiscreteLogNormal` -- mass ``beta`` at zero and the
  log-normal density evaluated at positive integers, renormalised.

Infinite normalising sums are truncated at :data:`D_MAX`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import optimize, special, stats

D_MAX = 100_000
TAIL_TOLERANCE = 1e-12

POWERLAW = "powerlaw"
LOGNORMAL = "lognormal"
TABLE = "table"
FAMILIES = (TABLE, POWERLAW, LOGNORMAL)

_SUPPORT = np.arange(1, D_MAX + 1, dtype=np.float64)
_LOG_SUPPORT = np.log(_SUPPORT)


def multinomial_log_pmf(z, d: int, theta) -> float:
    """Log of the multinomial pmf ``g(z; d, theta)``, coefficient included.

    Returns ``-inf`` outside the support (``sum(z) != d`` or a positive
    count on a zero-probability category).
    """
    z = np.asarray(z, dtype=np.int64)
    theta = np.asarray(theta, dtype=np.float64)
    if np.any(z < 0) or int(z.sum()) != d:
        return -math.inf
    nz = z > 0
    if np.any(theta[nz] <= 0):
        return -math.inf
    coef = special.gammaln(d + 1) - special.gammaln(z[nz] + 1).sum()
    return float(coef + np.dot(z[nz], np.log(theta[nz])))


@dataclass(frozen=True, eq=False)
class SmoothedTable:
    """Tabulated pmf on ``0..len(probs)-1``; larger degrees use the last entry."""

    probs: np.ndarray
    alpha: float = 0.0
    n_params = 0
    family = TABLE

    @property
    def d_max(self) -> int:
        return len(self.probs) - 1

    @cached_property
    def _log_probs(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(np.asarray(self.probs, dtype=np.float64))

    def log_pmf(self, d):
        d = np.minimum(np.asarray(d, dtype=np.int64), self.d_max)
        out = self._log_probs[d]
        return float(out) if out.ndim == 0 else out

    def pmf_table(self, d_max: int = D_MAX) -> np.ndarray:
        out = np.zeros(d_max + 1)
        k = min(d_max, self.d_max) + 1
        out[:k] = self.probs[:k]
        return out

    def describe(self) -> str:
        return f"family=table alpha={self.alpha!r} size={len(self.probs)}"


@dataclass(frozen=True, eq=False)
class _ZeroInflated:
    beta: float
    degenerate: bool = field(default=False, kw_only=True)
    n_params = 3

    def _log_weights(self) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def _log_weight_at(self, d: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    @cached_property
    def log_norm(self) -> float:
        """Log of the positive-part normaliser summed over ``1..D_MAX``."""
        return float(special.logsumexp(self._log_weights()))

    def log_pmf(self, d):
        d = np.asarray(d, dtype=np.int64)
        scalar = d.ndim == 0
        d = np.atleast_1d(d)
        out = np.empty(d.shape)
        with np.errstate(divide="ignore"):
            out[d == 0] = math.log(self.beta) if self.beta > 0 else -math.inf
            pos = d >= 1
            log_rest = math.log1p(-self.beta) if self.beta < 1 else -math.inf
            if self.degenerate:
                out[pos] = np.where(d[pos] == 1, log_rest, -math.inf)
            else:
                out[pos] = log_rest + self._log_weight_at(d[pos].astype(np.float64)) - self.log_norm
        out[d < 0] = -math.inf
        return float(out[0]) if scalar else out

    def pmf_table(self, d_max: int = D_MAX) -> np.ndarray:
        return np.exp(self.log_pmf(np.arange(d_max + 1)))


@dataclass(frozen=True, eq=False)
class ZeroInflatedTruncPowerLaw(_ZeroInflated):
    kappa: float = 1.0
    lam: float = 1.0
    family = POWERLAW

    def _log_weights(self):
        return -self.kappa * _LOG_SUPPORT - self.lam * _SUPPORT

    def _log_weight_at(self, d):
        return -self.kappa * np.log(d) - self.lam * d

    def tail_mass(self) -> float:
        """Upper bound on the relative positive mass beyond ``D_MAX``."""
        D = D_MAX + 1
        log_tail = -self.kappa * math.log(D) - self.lam * D - math.log(-math.expm1(-self.lam))
        return math.exp(log_tail - self.log_norm)

    @property
    def params(self) -> dict[str, float]:
        return {"beta": self.beta, "kappa": self.kappa, "lambda": self.lam}


@dataclass(frozen=True, eq=False)
class ZeroInflatedDiscreteLogNormal(_ZeroInflated):
    mu: float = 0.0
    sigma: float = 1.0
    family = LOGNORMAL

    def _log_weights(self):
        return self._log_weight_at(_SUPPORT)

    def _log_weight_at(self, d):
        ln = np.log(d)
        return -math.log(self.sigma) - ln - (ln - self.mu) ** 2 / (2.0 * self.sigma ** 2)

    def tail_mass(self) -> float:
        """Continuous approximation of the relative positive mass beyond ``D_MAX``."""
        hi = stats.norm.sf((math.log(D_MAX + 0.5) - self.mu) / self.sigma)
        lo = stats.norm.sf((math.log(0.5) - self.mu) / self.sigma)
        return float(hi / lo) if lo > 0 else 0.0

    @property
    def params(self) -> dict[str, float]:
        return {"beta": self.beta, "mu": self.mu, "sigma": self.sigma}


DegreeDistribution = SmoothedTable | ZeroInflatedTruncPowerLaw | ZeroInflatedDiscreteLogNormal


def degree_log_pmf(dist: DegreeDistribution, d):
    return dist.log_pmf(d)


def sample_degrees(dist: DegreeDistribution, size: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws over ``0..D_MAX``."""
    cdf = np.cumsum(dist.pmf_table())
    cdf /= cdf[-1]
    return np.searchsorted(cdf, rng.random(size), side="right").astype(np.int64)


# ---------------------------------------------------------------------------
# fitting

_BOUNDS = {
    POWERLAW: ((math.log(1e-6), math.log(20.0)), (math.log(1e-6), math.log(20.0))),
    LOGNORMAL: ((-10.0, 15.0), (math.log(1e-3), math.log(10.0))),
}
_GRID_SIDE = 8


def _make(family: str, beta: float, x, degenerate: bool = False):
    if family == POWERLAW:
        return ZeroInflatedTruncPowerLaw(beta, kappa=math.exp(x[0]), lam=math.exp(x[1]), degenerate=degenerate)
    return ZeroInflatedDiscreteLogNormal(beta, mu=float(x[0]), sigma=math.exp(x[1]), degenerate=degenerate)


def positive_log_likelihood(samples, dist) -> float:
    """Truncated-support log-likelihood of the positive samples under ``dist``."""
    samples = np.asarray(samples, dtype=np.int64)
    pos = samples[samples > 0]
    if pos.size == 0:
        return 0.0
    values, counts = np.unique(pos, return_counts=True)
    lw = dist._log_weight_at(values.astype(np.float64))
    return float(np.dot(counts, lw) - pos.size * dist.log_norm)


def _log_norm_powerlaw(kappa: float, lam: float) -> float:
    # weights decrease monotonically, so the first one is the maximum
    lw = -kappa * _LOG_SUPPORT - lam * _SUPPORT
    return float(lw[0] + math.log(np.exp(lw - lw[0]).sum()))


def _log_norm_lognormal(mu: float, sigma: float) -> float:
    lw = -_LOG_SUPPORT - (_LOG_SUPPORT - mu) ** 2 / (2.0 * sigma * sigma)
    top = lw.max()
    return float(top + math.log(np.exp(lw - top).sum()))


def _neg_ll_factory(family: str, values: np.ndarray, counts: np.ndarray):
    n = counts.sum()
    logv = np.log(values)
    sum_log = float(np.dot(counts, logv))
    if family == POWERLAW:
        sum_v = float(np.dot(counts, values))

        def neg_ll(x):
            kappa, lam = math.exp(x[0]), math.exp(x[1])
            return kappa * sum_log + lam * sum_v + n * _log_norm_powerlaw(kappa, lam)
    else:
        def neg_ll(x):
            mu, sigma = x[0], math.exp(x[1])
            data = -sum_log - float(np.dot(counts, (logv - mu) ** 2)) / (2 * sigma * sigma)
            return -(data - n * _log_norm_lognormal(mu, sigma))
    return neg_ll


def fit_zero_inflated(samples, family: str):
    """Maximum-likelihood zero-inflated fit.

    ``beta`` is the fraction of zeros; the positive-part parameters
    maximise the truncated-support likelihood of the positive samples.
    The search seeds from the best point of a fixed 8x8 grid (in log space
    for scale parameters) and refines with bounded Nelder-Mead, so the
    result is deterministic.
    """
    if family not in (POWERLAW, LOGNORMAL):
        raise ValueError(f"unknown zero-inflated family {family!r}")
    samples = np.asarray(samples, dtype=np.int64)
    if samples.size == 0:
        raise ValueError("cannot fit an empty sample")
    if np.any(samples < 0):
        raise ValueError("degrees must be non-negative")
    beta = float(np.mean(samples == 0))
    pos = samples[samples > 0]
    if pos.size == 0:
        x0 = (0.0, 0.0)
        return _make(family, 1.0, x0, degenerate=True)
    values, counts = np.unique(pos, return_counts=True)
    neg_ll = _neg_ll_factory(family, values.astype(np.float64), counts.astype(np.float64))
    bounds = _BOUNDS[family]
    grid = [np.linspace(lo, hi, _GRID_SIDE) for lo, hi in bounds]
    best_x, best_f = None, math.inf
    for a in grid[0]:
        for b in grid[1]:
            f = neg_ll((a, b))
            if f < best_f:
                best_x, best_f = (a, b), f
    res = optimize.minimize(
        neg_ll, np.array(best_x), method="Nelder-Mead", bounds=bounds,
        options={"xatol": 1e-9, "fatol": 1e-11, "maxiter": 4000, "maxfev": 8000},
    )
    x = res.x if res.fun <= best_f else np.array(best_x)
    return _make(family, beta, x)


def grid_points(family: str) -> list[tuple[float, float]]:
    """The seeding grid in natural parameter space (for optimizer sanity checks)."""
    pts = []
    for a in np.linspace(*_BOUNDS[family][0], _GRID_SIDE):
        for b in np.linspace(*_BOUNDS[family][1], _GRID_SIDE):
            if family == POWERLAW:
                pts.append((math.exp(a), math.exp(b)))
            else:
                pts.append((float(a), math.exp(b)))
    return pts


# ---------------------------------------------------------------------------
# goodness of fit

@dataclass
class GofResult:
    statistic: float
    n_cells: int
    dof: int
    p_value: float
    accepted: bool | None
    lower: np.ndarray
    upper: np.ndarray
    observed: np.ndarray
    expected: np.ndarray
    n_samples: int = 0
    inconclusive: bool = False

    @classmethod
    def inconclusive_result(cls, n_samples: int) -> "GofResult":
        empty = np.zeros(0)
        return cls(math.nan, 0, 0, math.nan, None, empty.astype(np.int64), empty.astype(np.int64),
                   empty, empty, n_samples=n_samples, inconclusive=True)

    def decision(self) -> str:
        if self.inconclusive:
            return "inconclusive"
        return "accept" if self.accepted else "reject"

    def summary_line(self, label, family: str) -> str:
        return f"{label}\t{family}\t{_fmt(self.statistic)}\t{self.dof}\t{_fmt(self.p_value)}\t{self.decision()}"

    def cell_rows(self) -> list[str]:
        rows = ["# lower\tupper\tobserved\texpected"]
        for lo, hi, o, e in zip(self.lower.tolist(), self.upper.tolist(),
                                self.observed.tolist(), self.expected.tolist()):
            rows.append(f"{lo}\t{hi}\t{int(o)}\t{e!r}")
        return rows


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x))


def chi2_sf(statistic: float, dof: int) -> float:
    return float(stats.chi2.sf(statistic, dof))


def _initial_cells(pmf: np.ndarray, n_cells: int) -> tuple[np.ndarray, np.ndarray]:
    """Contiguous ranges over ``0..len(pmf)-1`` with near-equal mass.

    Each cell takes the remaining mass divided by the remaining cell count,
    so a heavy atom (e.g. the zero-inflation mass) uses up one cell instead
    of swallowing several quantiles.
    """
    cum = np.cumsum(pmf)
    last = len(pmf) - 1
    lowers, uppers = [], []
    lo, before, left = 0, 0.0, n_cells
    while left > 1 and lo < last:
        target = (cum[-1] - before) / left
        hi = int(np.searchsorted(cum, before + target * (1 - 1e-12), side="left"))
        if hi >= last:
            break
        lowers.append(lo)
        uppers.append(hi)
        before = cum[hi]
        lo, left = hi + 1, left - 1
    lowers.append(lo)
    uppers.append(last)
    return np.array(lowers), np.array(uppers)


def chi_square_gof(samples, dist: DegreeDistribution, n_fitted_params: int = 3,
                   n_cells: int = 15, level: float = 0.05) -> GofResult:
    """Chi-squared test of integer samples against a degree distribution.

    Cells start as ``n_cells`` contiguous degree ranges of near-equal
    expected mass.  While any expected count is below 1 or more than 20%
    of them are below 5, the adjacent pair with the smallest combined
    expected count is merged.  The last cell absorbs everything above its
    lower bound.
    """
    samples = np.asarray(samples, dtype=np.int64)
    N = samples.size
    if N < 20:
        raise ValueError("chi-squared test needs at least 20 samples")
    pmf = dist.pmf_table()
    lowers, uppers = _initial_cells(pmf, n_cells)
    mass = np.array([pmf[lo:hi + 1].sum() for lo, hi in zip(lowers, uppers)])
    clipped = np.minimum(samples, D_MAX)
    observed = np.bincount(np.searchsorted(uppers, clipped, side="left"), minlength=len(uppers)).astype(np.float64)
    expected = N * mass

    lowers, uppers = list(lowers), list(uppers)
    observed, expected = list(observed), list(expected)

    def valid():
        e = np.array(expected)
        return not (np.any(e < 1) or np.sum(e < 5) > 0.2 * len(e))

    while len(expected) > 1 and not valid():
        pair = np.array(expected[:-1]) + np.array(expected[1:])
        i = int(np.argmin(pair))
        expected[i:i + 2] = [expected[i] + expected[i + 1]]
        observed[i:i + 2] = [observed[i] + observed[i + 1]]
        uppers[i:i + 2] = [uppers[i + 1]]
        lowers[i:i + 2] = [lowers[i]]

    k = len(expected)
    o, e = np.array(observed), np.array(expected)
    dof = k - 1 - n_fitted_params
    with np.errstate(divide="ignore", invalid="ignore"):
        T = float(np.sum(np.where(e > 0, (o - e) ** 2 / e, np.where(o > 0, np.inf, 0.0))))
    common = dict(lower=np.array(lowers), upper=np.array(uppers), observed=o, expected=e, n_samples=N)
    if dof < 1 or not valid():
        return GofResult(T, k, dof, math.nan, None, inconclusive=True, **common)
    p = chi2_sf(T, dof)
    return GofResult(T, k, dof, p, bool(p > level), **common)
