"""Hypothesis-test building blocks: 2x2 tables, exact hypergeometric tail
probabilities, Fisher's exact test, logistic regression with Wald p-values,
and the TestSpec bundle consumed by the fragility searches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, Callable, Optional, Sequence

import numpy as np
from scipy.special import betainc, gammaln, ndtr

from ._kernels import fisher_p, log_factorials
from .errors import InvalidParameterError, SingularDesignError, UnconvergedFitError

if TYPE_CHECKING:  # pragma: no cover
    from .cases import CaseFrame

__all__ = [
    "Table2x2",
    "LogisticFit",
    "TestSpec",
    "hypergeom_pmf",
    "hypergeom_sf",
    "fisher_exact_two_sided",
    "logistic_fit",
    "wald_p",
    "is_significant",
    "fisher_test",
    "logistic_wald_test",
]

# populations above this use the binomial approximation for tail sums
_EXACT_SF_LIMIT = 10_000_000


@dataclass(frozen=True)
class Table2x2:
    """Counts (a, b, c, d) = (arm-1 events, arm-1 non-events, arm-2 events,
    arm-2 non-events)."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        for name in ("a", "b", "c", "d"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
                raise InvalidParameterError(f"cell {name} must be an integer, got {v!r}")
            if v < 0:
                raise InvalidParameterError(f"cell {name} must be >= 0, got {v}")
        if self.n < 1:
            raise InvalidParameterError("table must contain at least one case")

    @property
    def n(self) -> int:
        return self.a + self.b + self.c + self.d

    @property
    def row1(self) -> int:
        return self.a + self.b

    @property
    def row2(self) -> int:
        return self.c + self.d

    @property
    def col1(self) -> int:
        return self.a + self.c

    @property
    def col2(self) -> int:
        return self.b + self.d

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.a, self.b, self.c, self.d)

    def shifted(self, i: int, j: int) -> "Table2x2":
        """Table after net event shifts i in arm 1 and j in arm 2."""
        return Table2x2(self.a + i, self.b - i, self.c + j, self.d - j)

    def odds_ratio(self) -> float:
        if self.b == 0 or self.c == 0:
            return math.inf if self.a > 0 and self.d > 0 else math.nan
        return (self.a * self.d) / (self.b * self.c)


def _lchoose(n: int, k: int) -> float:
    if k < 0 or k > n:
        return -math.inf
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def _check_hypergeom_params(population, successes, draws):
    for name, v in (("population", population), ("successes", successes), ("draws", draws)):
        if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
            raise InvalidParameterError(f"{name} must be an integer, got {v!r}")
    if population < 0:
        raise InvalidParameterError("population must be >= 0")
    if not 0 <= successes <= population:
        raise InvalidParameterError("need 0 <= successes <= population")
    if not 0 <= draws <= population:
        raise InvalidParameterError("need 0 <= draws <= population")


def hypergeom_pmf(population: int, successes: int, draws: int, count: int) -> float:
    """P[X = count] for X ~ Hypergeometric(population, successes, draws).

    Exact in log space; zero outside the support.
    """
    _check_hypergeom_params(population, successes, draws)
    lo = max(0, draws - (population - successes))
    hi = min(draws, successes)
    if count < lo or count > hi:
        return 0.0
    lp = (
        _lchoose(successes, count)
        + _lchoose(population - successes, draws - count)
        - _lchoose(population, draws)
    )
    return math.exp(lp)


def hypergeom_sf(
    population: int,
    successes: int,
    draws: int,
    threshold: int,
    method: str = "auto",
) -> float:
    """P[X >= threshold] for X ~ Hypergeometric(population, successes, draws).

    method 'exact' sums the pmf (chunked, log space); 'binomial' uses the
    regularized incomplete beta of the Binomial(draws, successes/population)
    tail, appropriate when draws << population; 'auto' picks 'binomial'
    above a population of 10^7.
    """
    _check_hypergeom_params(population, successes, draws)
    if method not in ("auto", "exact", "binomial"):
        raise InvalidParameterError(f"unknown method {method!r}")
    lo = max(0, draws - (population - successes))
    hi = min(draws, successes)
    if threshold <= lo:
        return 1.0
    if threshold > hi:
        return 0.0
    if method == "auto":
        method = "binomial" if population > _EXACT_SF_LIMIT else "exact"
    if method == "binomial":
        p = successes / population
        # P[Binom(m, p) >= t] = I_p(t, m - t + 1)
        return float(betainc(threshold, draws - threshold + 1, p))
    lbase = _lchoose(population, draws)
    lk = math.lgamma(successes + 1)
    lrest = math.lgamma(population - successes + 1)
    total = 0.0
    for start in range(threshold, hi + 1, 1_000_000):
        stop = min(start + 1_000_000, hi + 1)
        x = np.arange(start, stop, dtype=np.float64)
        lp = (
            lk
            - gammaln(x + 1.0)
            - gammaln(successes - x + 1.0)
            + lrest
            - gammaln(draws - x + 1.0)
            - gammaln(population - successes - draws + x + 1.0)
            - lbase
        )
        total += float(np.exp(lp).sum())
    return min(total, 1.0)


@lru_cache(maxsize=64)
def _lf_cache(total: int) -> np.ndarray:
    lf = log_factorials(total)
    lf.setflags(write=False)
    return lf


def fisher_exact_two_sided(table: Table2x2) -> float:
    """Fisher's exact conditional two-sided p-value.

    Sums, over the support of the conditional hypergeometric distribution,
    every table whose pmf does not exceed the observed table's pmf (with a
    1e-12 log slack so ties survive rounding). Degenerate margins give 1.
    """
    lf = _lf_cache(table.n)
    return float(fisher_p(lf, table.a, table.b, table.c, table.d))


@dataclass(frozen=True)
class LogisticFit:
    """Newton/IRLS fit of a binary-outcome logistic model."""

    coefficients: np.ndarray
    standard_errors: np.ndarray
    converged: bool
    separated: bool
    iterations: int
    deviance: float


def _deviance(y: np.ndarray, mu: np.ndarray) -> float:
    mu = np.clip(mu, 1e-12, 1 - 1e-12)
    return float(-2.0 * (y @ np.log(mu) + (1 - y) @ np.log1p(-mu)))


def logistic_fit(
    design: np.ndarray,
    outcomes: np.ndarray,
    max_iter: int = 50,
    tol_score: float = 1e-8,
    tol_dev: float = 1e-10,
) -> LogisticFit:
    """Fit a logistic regression by Newton's method (IRLS).

    Args:
        design: (n, p) float design matrix including any intercept column.
        outcomes: length-n 0/1 array.

    Raises SingularDesignError on rank-deficient designs. Separation is
    reported via the flags (converged=False, separated=True), never raised.
    """
    X = np.asarray(design, dtype=np.float64)
    y = np.asarray(outcomes, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidParameterError("design must be 2-dimensional")
    n, p = X.shape
    if y.shape != (n,):
        raise InvalidParameterError("outcomes length must match design rows")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise InvalidParameterError("outcomes must be 0/1")
    if n < p:
        raise InvalidParameterError("need at least as many rows as parameters")
    if np.linalg.matrix_rank(X) < p:
        raise SingularDesignError(f"design has rank < {p}")

    beta = np.zeros(p)
    eta = X @ beta
    mu = _sigmoid(eta)
    dev = _deviance(y, mu)
    converged = False
    it = 0
    info = None
    for it in range(1, max_iter + 1):
        w = mu * (1.0 - mu)
        score = X.T @ (y - mu)
        info = X.T @ (w[:, None] * X)
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            step = np.linalg.solve(info + 1e-8 * np.eye(p), score)
        beta = beta + step
        eta = X @ beta
        mu = _sigmoid(eta)
        new_dev = _deviance(y, mu)
        score_new = X.T @ (y - mu)
        rel = abs(new_dev - dev) / (abs(dev) + 1e-300)
        dev = new_dev
        if float(np.max(np.abs(score_new))) < tol_score or rel < tol_dev:
            converged = True
            break

    # separation: the likelihood has no interior maximum. Either the fit
    # predicts every case perfectly (score converges with probabilities
    # pinned to 0/1) or fitted log odds have run away; the Wald machinery
    # is meaningless in both situations.
    perfect = bool(np.all(np.abs(y - mu) < 1e-6))
    separated = perfect or bool(np.max(np.abs(eta)) > 30.0)
    if separated:
        converged = False

    if converged:
        w = mu * (1.0 - mu)
        info = X.T @ (w[:, None] * X)
        try:
            cov = np.linalg.inv(info)
        except np.linalg.LinAlgError:
            cov = np.linalg.inv(info + 1e-8 * np.eye(p))
        se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    else:
        se = np.full(p, np.nan)
    return LogisticFit(
        coefficients=beta,
        standard_errors=se,
        converged=converged,
        separated=separated,
        iterations=it,
        deviance=dev,
    )


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    ex = np.exp(eta[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def wald_p(fit: LogisticFit, index: int) -> float:
    """Two-sided Wald p-value for one coefficient of a converged fit."""
    if not fit.converged:
        raise UnconvergedFitError(
            "Wald p-value requested from an unconverged fit"
            + (" (separation detected)" if fit.separated else "")
        )
    se = fit.standard_errors[index]
    if not np.isfinite(se) or se <= 0:
        raise UnconvergedFitError(f"no usable standard error for coefficient {index}")
    z = abs(fit.coefficients[index]) / se
    return float(2.0 * ndtr(-z))


def is_significant(p: float, alpha: float) -> bool:
    """Strict comparison p < alpha after validating both arguments."""
    if not (isinstance(p, (int, float, np.floating)) and 0.0 <= p <= 1.0):
        raise InvalidParameterError(f"p must lie in [0, 1], got {p!r}")
    if not 0.0 < alpha < 1.0:
        raise InvalidParameterError(f"alpha must lie in (0, 1), got {alpha!r}")
    return p < alpha


@dataclass(frozen=True)
class TestSpec:
    """A decision rule: p_value over a case frame plus the alpha threshold.

    table_p, when present, evaluates the same test straight from 2x2 cell
    counts; its presence marks the test as table-reducible, which unlocks
    the exact exchangeable-table machinery. make_fast_eval, when present,
    builds a per-frame evaluator with a vectorized single-flip method used
    by the greedy search; results match p_value up to solver tolerance.
    kernel names a compiled grid kernel for the table test ("fisher") so
    the exact machinery can avoid per-cell Python calls.
    """

    name: str
    alpha: float
    p_value: Callable[["CaseFrame"], float]
    table_p: Optional[Callable[[int, int, int, int], float]] = None
    make_fast_eval: Optional[Callable[["CaseFrame"], object]] = None
    kernel: Optional[str] = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidParameterError(f"alpha must lie in (0, 1), got {self.alpha!r}")


def fisher_test(alpha: float = 0.05) -> TestSpec:
    """Fisher's exact two-sided test on the frame's 2x2 aggregation."""

    def table_p(a: int, b: int, c: int, d: int) -> float:
        return fisher_exact_two_sided(Table2x2(a, b, c, d))

    def p_value(frame: "CaseFrame") -> float:
        from .cases import table_from_frame

        t = table_from_frame(frame)
        return table_p(t.a, t.b, t.c, t.d)

    return TestSpec(
        name="fisher", alpha=alpha, p_value=p_value, table_p=table_p, kernel="fisher"
    )


def _design_matrix(frame: "CaseFrame", covariates: Sequence[str]) -> np.ndarray:
    if len(frame.arm_levels) != 2:
        raise InvalidParameterError("logistic arm test needs exactly two arms")
    cols = [np.ones(frame.n), frame.arm_codes.astype(np.float64)]
    for name in covariates:
        if name not in frame.covariates:
            raise InvalidParameterError(f"unknown covariate {name!r}")
        cols.append(frame.covariates[name])
    return np.column_stack(cols)


class _LogisticFlipEval:
    """Batched single-flip re-fitting for the greedy search.

    Newton iterations run simultaneously for every candidate flip, warm
    started from the current fit, so one greedy step costs a handful of
    (m, p, p) batched solves instead of m cold fits.
    """

    def __init__(self, frame: "CaseFrame", covariates: Sequence[str], alpha: float):
        self.X = _design_matrix(frame, covariates)
        self.n, self.p = self.X.shape
        self._base_beta = np.zeros(self.p)

    def refit(self, y: np.ndarray) -> float:
        """Exact fit of the current outcome vector; updates the warm start."""
        fit = logistic_fit(self.X, y)
        if fit.converged:
            self._base_beta = fit.coefficients.copy()
        return wald_p(fit, 1)

    def p_after_flips(self, y: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """Wald p of the arm coefficient after flipping outcome y[r] for each
        candidate row r (one at a time). NaN marks a non-converged refit."""
        X = self.X
        m = rows.size
        Y = np.repeat(y[None, :], m, axis=0)
        Y[np.arange(m), rows] = 1.0 - Y[np.arange(m), rows]
        B = np.repeat(self._base_beta[None, :], m, axis=0)
        ok = np.zeros(m, dtype=bool)
        for _ in range(25):
            eta = B @ X.T  # (m, n)
            mu = _sigmoid(eta)
            resid = Y - mu
            score = resid @ X  # (m, p)
            done = np.max(np.abs(score), axis=1) < 1e-8
            ok |= done
            if ok.all():
                break
            w = mu * (1.0 - mu)
            info = np.einsum("mn,np,nq->mpq", w, X, X, optimize=True)
            info += 1e-12 * np.eye(self.p)[None, :, :]
            step = np.linalg.solve(info, score[:, :, None])[:, :, 0]
            act = ~ok
            B[act] += step[act]
        eta = B @ X.T
        mu = _sigmoid(eta)
        separated = np.max(np.abs(eta), axis=1) > 30.0
        w = mu * (1.0 - mu)
        info = np.einsum("mn,np,nq->mpq", w, X, X, optimize=True)
        cov = np.linalg.inv(info + 1e-12 * np.eye(self.p)[None, :, :])
        se = np.sqrt(np.maximum(cov[:, 1, 1], 0.0))
        z = np.abs(B[:, 1]) / np.where(se > 0, se, np.nan)
        out = 2.0 * ndtr(-z)
        out[separated | ~ok] = np.nan
        return out


def logistic_wald_test(
    covariates: Sequence[str] = (),
    alpha: float = 0.05,
) -> TestSpec:
    """Wald test of the arm coefficient in a logistic model with the given
    covariate columns (intercept + arm indicator + covariates)."""
    covariates = tuple(covariates)

    def p_value(frame: "CaseFrame") -> float:
        X = _design_matrix(frame, covariates)
        fit = logistic_fit(X, frame.outcome_codes.astype(np.float64))
        return wald_p(fit, 1)

    def make_fast_eval(frame: "CaseFrame") -> _LogisticFlipEval:
        return _LogisticFlipEval(frame, covariates, alpha)

    name = "logistic_wald" if covariates else "logistic_wald_unadjusted"
    return TestSpec(
        name=name,
        alpha=alpha,
        p_value=p_value,
        table_p=None,
        make_fast_eval=make_fast_eval,
    )
