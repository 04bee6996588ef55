"""Average-effect estimators and the diagnostics around them."""

from __future__ import annotations

import itertools
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import qr, solve_triangular
from scipy.special import expit

from .expr import JointTable, ZeroDenominator
from .graph import MixedGraph
from .rng import CounterStreams
from .scm import Covariance, Dataset, NonLinearMechanism, Scm, implied_covariance
from .sep import d_separated

RANK_TOL = 1e-8
NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 100
PARTIAL_CORR_TOL = 1e-10
DEGENERATE_VAR = 1e-10
# a fitted logit beyond this puts a propensity within ~1e-13 of 0 or 1
SEPARATION_LOGIT = 30.0


class EstimationError(ValueError):
    pass


class EmptyArm(EstimationError):
    pass


class EmptyStratumArm(EstimationError):
    pass


class RankDeficient(EstimationError):
    pass


class NonConvergence(EstimationError):
    pass


class NonGaussian(EstimationError):
    pass


class ExtremePropensity(UserWarning):
    pass


@dataclass
class EstimateReport:
    estimand: str
    estimate: float
    se: float
    n: int
    seed: int | None
    method: str
    diagnostics: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def ci(self, z: float = 1.959963984540054) -> tuple[float, float]:
        return self.estimate - z * self.se, self.estimate + z * self.se


def _arms(d: Dataset, treatment: str) -> np.ndarray:
    a = np.asarray(d[treatment])
    if not np.isin(a, (0, 1)).all():
        raise EstimationError(f"treatment {treatment} must be binary 0/1")
    return a.astype(bool)


def diff_in_means(d: Dataset, treatment: str = "A", outcome: str = "Y") -> EstimateReport:
    a = _arms(d, treatment)
    y = np.asarray(d[outcome], dtype=float)
    y1, y0 = y[a], y[~a]
    if not len(y1) or not len(y0):
        raise EmptyArm("both treatment arms need at least one unit")
    var = lambda v: v.var(ddof=1) if len(v) > 1 else 0.0
    se = float(np.sqrt(var(y1) / len(y1) + var(y0) / len(y0)))
    return EstimateReport("ATE", float(y1.mean() - y0.mean()), se, d.n, d.seed, "diff_in_means",
                          {"n_treated": int(a.sum()), "n_control": int((~a).sum())})


def _lstsq_qr(X: np.ndarray, y: np.ndarray, names: Sequence[str]):
    """Least squares by pivoted QR; refuses rank-deficient designs."""
    Q, R, piv = qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int((diag > RANK_TOL * diag[0]).sum()) if diag.size else 0
    if rank < X.shape[1]:
        dropped = sorted(names[i] for i in piv[rank:])
        raise RankDeficient(f"design matrix has rank {rank} < {X.shape[1]}; collinear columns: {dropped}")
    beta_p = solve_triangular(R, Q.T @ y)
    beta = np.empty_like(beta_p)
    beta[piv] = beta_p
    Rinv = solve_triangular(R, np.eye(R.shape[0]))
    cov_p = Rinv @ Rinv.T
    cov = np.empty_like(cov_p)
    cov[np.ix_(piv, piv)] = cov_p
    return beta, cov


def regression_adjustment(
    d: Dataset, covariates: Sequence[str], treatment: str = "A", outcome: str = "Y"
) -> EstimateReport:
    """Coefficient on the treatment in OLS of outcome on treatment and covariates."""
    covariates = list(covariates)
    a = _arms(d, treatment).astype(float)
    y = np.asarray(d[outcome], dtype=float)
    names = ["(intercept)", treatment, *covariates]
    X = np.column_stack([np.ones(d.n), a, *(np.asarray(d[c], dtype=float) for c in covariates)])
    if d.n <= X.shape[1]:
        raise RankDeficient("need more rows than regression coefficients")
    beta, xtx_inv = _lstsq_qr(X, y, names)
    resid = y - X @ beta
    sigma2 = float(resid @ resid) / (d.n - X.shape[1])
    se = float(np.sqrt(sigma2 * xtx_inv[1, 1]))
    return EstimateReport("ATE", float(beta[1]), se, d.n, d.seed, "regression_adjustment",
                          {"covariates": covariates, "residual_variance": sigma2})


@dataclass
class LogisticFit:
    coef: np.ndarray
    iterations: int
    grad_norm: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        return expit(X @ self.coef)


def fit_logistic(X: np.ndarray, t: np.ndarray, tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER) -> LogisticFit:
    """Unpenalized logistic MLE by Newton's method.

    Convergence is measured on the gradient of the mean log-likelihood so
    the tolerance does not scale with n.
    """
    n = X.shape[0]
    beta = np.zeros(X.shape[1])
    for it in range(1, max_iter + 1):
        p = expit(X @ beta)
        grad = X.T @ (t - p) / n
        gnorm = float(np.linalg.norm(grad))
        if not np.isfinite(gnorm):
            break
        if gnorm < tol:
            # under separation the gradient vanishes only as the coefficients diverge
            if np.abs(X @ beta).max() > SEPARATION_LOGIT:
                raise NonConvergence("treatment is (quasi-)separated by the covariates; the MLE does "
                                     "not exist, drop or coarsen the separating covariates")
            return LogisticFit(beta, it - 1, gnorm)
        H = (X * (p * (1 - p))[:, None]).T @ X / n
        try:
            beta = beta + np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            raise NonConvergence("singular Hessian; treatment is separated by the covariates "
                                 "or covariates are collinear") from None
    raise NonConvergence(
        f"logistic fit did not reach gradient norm {tol} in {max_iter} iterations; "
        "this usually means the treatment is (quasi-)separated by the covariates"
    )


def _design(d: Dataset, covariates: Sequence[str]) -> np.ndarray:
    return np.column_stack([np.ones(d.n), *(np.asarray(d[c], dtype=float) for c in covariates)])


def ipw(
    d: Dataset, covariates: Sequence[str], treatment: str = "A", outcome: str = "Y",
    bounds: tuple[float, float] = (0.01, 0.99),
) -> EstimateReport:
    """Horvitz-Thompson contrast with logistic propensities.

    The SE treats the fitted propensities as known.
    """
    covariates = list(covariates)
    a = _arms(d, treatment)
    if a.all() or not a.any():
        raise EmptyArm("both treatment arms need at least one unit")
    y = np.asarray(d[outcome], dtype=float)
    fit = fit_logistic(_design(d, covariates), a.astype(float))
    e = fit.predict(_design(d, covariates))
    psi = np.where(a, y / e, 0.0) - np.where(~a, y / (1 - e), 0.0)
    est = float(psi.mean())
    se = float(psi.std(ddof=1) / np.sqrt(d.n)) if d.n > 1 else 0.0
    report = EstimateReport("ATE", est, se, d.n, d.seed, "ipw", {
        "covariates": covariates,
        "newton_iterations": fit.iterations,
        "min_propensity": float(e.min()),
        "max_propensity": float(e.max()),
    })
    lo, hi = bounds
    if e.min() < lo or e.max() > hi:
        msg = f"fitted propensities span [{e.min():.3g}, {e.max():.3g}], outside [{lo}, {hi}]"
        report.warnings.append(f"ExtremePropensity: {msg}")
        warnings.warn(msg, ExtremePropensity, stacklevel=2)
    return report


def stratified_adjustment(
    j: JointTable | Dataset, strata: str | Sequence[str], treatment: str = "A", outcome: str = "Y"
) -> EstimateReport:
    """Standardization: sum_c [E(Y|A=1,c) - E(Y|A=0,c)] P(c)."""
    strata = [strata] if isinstance(strata, str) else list(strata)
    if isinstance(j, JointTable):
        return _stratified_exact(j, strata, treatment, outcome)
    return _stratified_sample(j, strata, treatment, outcome)


def _stratified_exact(j, strata, treatment, outcome):
    total = 0.0
    for combo in itertools.product(*(j.domain(v) for v in strata)):
        c = dict(zip(strata, combo))
        pc = j.prob(c)
        if pc == 0:
            continue
        try:
            diff = j.expectation(outcome, {**c, treatment: 1}) - j.expectation(outcome, {**c, treatment: 0})
        except ZeroDenominator:
            raise EmptyStratumArm(f"stratum {c} has an arm with probability zero") from None
        total += diff * pc
    return EstimateReport("ATE", total, 0.0, 0, None, "stratified_adjustment", {"strata": strata, "exact": True})


def _stratified_sample(d, strata, treatment, outcome):
    a = _arms(d, treatment)
    y = np.asarray(d[outcome], dtype=float)
    keys = np.column_stack([np.asarray(d[s]) for s in strata])
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    est, var = 0.0, 0.0
    for k in range(len(uniq)):
        m = inv == k
        y1, y0 = y[m & a], y[m & ~a]
        if not len(y1) or not len(y0):
            raise EmptyStratumArm(f"stratum {dict(zip(strata, uniq[k].tolist()))} lacks a treatment arm")
        w = m.sum() / d.n
        est += w * (y1.mean() - y0.mean())
        v1 = y1.var(ddof=1) / len(y1) if len(y1) > 1 else 0.0
        v0 = y0.var(ddof=1) / len(y0) if len(y0) > 1 else 0.0
        var += w * w * (v1 + v0)
    return EstimateReport("ATE", float(est), float(np.sqrt(var)), d.n, d.seed, "stratified_adjustment",
                          {"strata": strata, "exact": False, "n_strata": len(uniq)})


def bootstrap_se(
    estimator: Callable[[Dataset], EstimateReport], d: Dataset, reps: int = 200, seed: int = 0
) -> float:
    """Nonparametric bootstrap SE; resampling indices come from the counter streams."""
    streams = CounterStreams(seed)
    vals = []
    for r in range(reps):
        idx = (streams.raw(f"bootstrap/{r}", 0, d.n) % np.uint64(d.n)).astype(np.int64)
        sub = Dataset({k: v[idx] for k, v in d.columns.items()}, d.seed, d.n, d.po_columns)
        vals.append(estimator(sub).estimate)
    return float(np.std(vals, ddof=1))


@dataclass
class PositivityReport:
    min_propensity: float
    max_propensity: float
    n_extreme: int
    single_arm_strata: list[dict]
    flags: list[str]
    bounds: tuple[float, float]

    @property
    def ok(self) -> bool:
        return not self.flags


def positivity_diagnostic(
    d: Dataset, covariates: Sequence[str], treatment: str = "A", bounds: tuple[float, float] = (0.01, 0.99)
) -> PositivityReport:
    """Fitted-propensity range plus single-arm strata of discrete covariates."""
    covariates = list(covariates)
    a = _arms(d, treatment)
    lo, hi = bounds
    flags = []
    try:
        e = fit_logistic(_design(d, covariates), a.astype(float)).predict(_design(d, covariates))
    except NonConvergence as exc:
        flags.append(f"propensity model failed: {exc}")
        e = np.full(d.n, a.mean())
    n_extreme = int(((e < lo) | (e > hi)).sum())
    if n_extreme:
        flags.append(f"{n_extreme} units with fitted propensity outside [{lo}, {hi}]")
    single = []
    discrete = [c for c in covariates if np.issubdtype(np.asarray(d[c]).dtype, np.integer)]
    if discrete:
        keys = np.column_stack([np.asarray(d[c]) for c in discrete])
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        for k in range(len(uniq)):
            m = inv == k
            if a[m].all() or not a[m].any():
                single.append({**dict(zip(discrete, uniq[k].tolist())), "n": int(m.sum()),
                               "arm": int(a[m][0])})
        if single:
            flags.append(f"{len(single)} covariate strata contain only one treatment arm")
    return PositivityReport(float(e.min()), float(e.max()), n_extreme, single, flags, (lo, hi))


@dataclass(frozen=True)
class FaithfulnessViolation:
    x: str
    y: str
    given: tuple[str, ...]
    partial_correlation: float

    def __str__(self):
        return f"({self.x}, {self.y} | {', '.join(self.given) or '∅'})"


def partial_covariance(cov: Covariance, x: str, y: str, given: Sequence[str]) -> tuple[float, float, float]:
    """(cov(x,y|Z), var(x|Z), var(y|Z)) from the Gaussian Schur complement."""
    S = cov.sub([x, y, *given])
    if not given:
        return S[0, 1], S[0, 0], S[1, 1]
    A, B, C = S[:2, :2], S[:2, 2:], S[2:, 2:]
    cond = A - B @ np.linalg.pinv(C, rcond=1e-12, hermitian=True) @ B.T
    return cond[0, 1], cond[0, 0], cond[1, 1]


def faithfulness_check(g: MixedGraph, cov: Covariance | Scm, max_given: int = 2) -> list[FaithfulnessViolation]:
    """Zero partial correlations that the graph does not imply.

    Conditioning sets range over the other covariance variables with
    ``|Z| <= max_given``. Pairs whose conditional variance is degenerate
    (determined by ``Z``) are skipped.
    """
    if isinstance(cov, Scm):
        try:
            cov = implied_covariance(cov)
        except NonLinearMechanism as exc:
            raise NonGaussian(str(exc)) from None
        if len(cov.names) < 2:
            raise NonGaussian("fewer than two observed nodes are linear in Gaussian terms")
    M = np.asarray(cov.matrix, dtype=float)
    if not np.all(np.isfinite(M)) or not np.allclose(M, M.T, atol=1e-12):
        raise NonGaussian("covariance must be finite and symmetric")
    names = [v for v in cov.names if v in g]
    out = []
    for k in range(max_given + 1):
        for x, y in itertools.combinations(names, 2):
            rest = [v for v in names if v not in (x, y)]
            for z in itertools.combinations(rest, k):
                cxy, vx, vy = partial_covariance(cov, x, y, z)
                if vx < DEGENERATE_VAR or vy < DEGENERATE_VAR:
                    continue
                r = cxy / np.sqrt(vx * vy)
                if abs(r) <= PARTIAL_CORR_TOL and not d_separated(g, {x}, {y}, set(z)):
                    out.append(FaithfulnessViolation(x, y, tuple(z), float(r)))
    return out
