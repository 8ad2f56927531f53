"""Per-cluster variable selection.

Within a cluster the model space is explored by a simplified shotgun
stochastic search: score the screened addition neighborhood and the deletion
neighborhood of the current model, sample one candidate from each with
probability proportional to its posterior score, pick between the two the
same way, then refresh the screen set from the new model's residuals.
Model scores are Laplace approximations around the within-model posterior
mode, found by a damped projected Newton solver (bounded L-BFGS fallback);
the slab log density is singular at 0, so every included coordinate is kept
on its starting side of the origin.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .dataset import (
    LOG_DBL_MAX,
    CoefficientVector,
    EMPTY_COEF,
    EMPTY_MODEL,
    ModelIndex,
    SurvivalDataset,
)
from .errors import DataError
from .priors import (
    ImomHyper,
    ModelPriorHyper,
    imom_log_density,
    imom_log_density_hess,
    model_log_prior,
)

# cap on log cumulative hazard inside the optimizer: keeps line-search trial
# points finite (n * e^690 stays well under double overflow)
_OPT_LOG_CAP = 690.0
_MIN_ABS_COEF = 1e-8
_MAX_STEP_INF = 4.0  # per-iteration trust cap on the Newton move (inf norm)

LOG_2PI = float(np.log(2.0 * np.pi))


class ModelFitError(Exception):
    """Soft failure: the model is dropped from the neighborhood, search continues."""


@dataclass(frozen=True)
class SearchConfig:
    """Knobs of the stochastic model search.

    max_model_size of None resolves per shard to min(p - 1, rows // 3).
    """

    iterations: int = 30
    screen_size: int = 10
    max_model_size: int | None = None
    tol: float = 1e-5
    max_opt_iter: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise DataError("search needs at least one iteration")
        if self.screen_size < 1:
            raise DataError("screen size must be >= 1")

    def size_cap(self, p: int, rows: int) -> int:
        # an explicit max_model_size tightens the shard-driven default; it
        # never lifts the rows//3 guard (tiny shards would interpolate)
        cap = min(p - 1, rows // 3)
        if self.max_model_size is not None:
            cap = min(cap, self.max_model_size)
        return max(0, min(cap, rows - 2))


class ClusterShard:
    """One cluster's slice of the dataset, with the arrays the hot loops need."""

    def __init__(self, dataset: SurvivalDataset, rows=None):
        if rows is None:
            rows = np.arange(dataset.n)
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size == 0:
            raise DataError("a shard must contain at least one row")
        if rows.min() < 0 or rows.max() >= dataset.n:
            raise DataError("shard row index out of range")
        self.dataset = dataset
        self.rows = np.sort(rows)
        self.X = np.ascontiguousarray(dataset.design[self.rows])
        self.times = dataset.times[self.rows]
        self.log_times = dataset.log_times[self.rows]
        self.events = dataset.events[self.rows].astype(float)
        self.key = self.rows.tobytes()
        self._null_sign = None

    @property
    def n(self) -> int:
        return self.rows.size

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def null_start_signs(self) -> np.ndarray:
        """Sign of the null-model screening score per covariate (0 maps to +1)."""
        if self._null_sign is None:
            score = self.X.T @ (self.events - np.minimum(self.times, np.exp(_OPT_LOG_CAP)))
            self._null_sign = np.where(score < 0.0, -1.0, 1.0)
        return self._null_sign

    def linear_predictor(self, coef: CoefficientVector) -> np.ndarray:
        if coef.model.size == 0:
            return np.zeros(self.n)
        return self.X[:, list(coef.model.indices)] @ coef.values

    def log_likelihood(self, coef: CoefficientVector) -> float:
        eta = self.linear_predictor(coef)
        s = self.log_times + eta
        if np.any(s > LOG_DBL_MAX):
            return float("-inf")
        total = float(self.events @ eta - np.exp(s).sum())
        return total if np.isfinite(total) else float("-inf")

    def martingale_residuals(self, coef: CoefficientVector) -> np.ndarray:
        """delta - cumulative hazard, capped so screening scores stay finite."""
        s = np.minimum(self.log_times + self.linear_predictor(coef), _OPT_LOG_CAP)
        return self.events - np.exp(s)


@dataclass(frozen=True)
class ModelScore:
    """A model with its posterior-mode coefficients and Laplace log score."""

    model: ModelIndex
    map_coef: CoefficientVector
    log_score: float
    hessian_logdet: float


@dataclass
class SearchResult:
    best: ModelScore
    trace: list = field(default_factory=list)
    soft_failures: int = 0
    distinct_scored: int = 0

    def trace_lines(self):
        """Line-delimited records of every scored visit, for diagnostics."""
        for model, log_score in self.trace:
            yield json.dumps({"model": list(model.indices), "log_score": log_score})


def _converged(gnorm: float, fval: float, tol: float) -> bool:
    # absolute tolerance, with a relative fallback for shards whose objective
    # sits at ~1e100 (mixed extreme-coefficient groups)
    return gnorm <= tol or gnorm <= 1e-6 * (1.0 + abs(fval))


def _newton_map(Xm, logt, delta, hyper: ImomHyper, start, tol, maxiter):
    """Projected damped Newton on the negative log posterior.

    The slab keeps coordinates stiff near the origin (curvature ~ tau/u^4),
    which the exact Hessian absorbs; iterates are clipped to the starting
    side of 0.  Returns the mode or raises ModelFitError.
    """
    r1, tau = hyper.r + 1.0, hyper.tau
    q = start.size
    lo = np.where(start > 0, _MIN_ABS_COEF, -np.inf)
    hi = np.where(start > 0, np.inf, -_MIN_ABS_COEF)

    def value(b):
        eta = Xm @ b
        ch = np.exp(np.minimum(logt + eta, _OPT_LOG_CAP))
        f = -(delta @ eta - ch.sum()) + np.sum(r1 * np.log(np.abs(b)) + tau / (b * b))
        return f, ch

    def project(b):
        return np.minimum(np.maximum(b, lo), hi)

    b = start.copy()
    f, ch = value(b)
    for _ in range(maxiter):
        g = -(Xm.T @ (delta - ch)) + (r1 / b - 2.0 * tau / b**3)
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= tol:
            return b
        # Direction from a PSD surrogate: exact likelihood curvature (always
        # PSD) plus only the nonnegative part of the prior curvature.  The
        # prior's weak negative curvature at large |b| would make the exact
        # Hessian indefinite exactly where the likelihood is flattest.
        H = Xm.T @ (Xm * ch[:, None])
        H.flat[:: q + 1] += np.maximum(-r1 / (b * b) + 6.0 * tau / b**4, 0.0) + 1e-10
        if not np.all(np.isfinite(H)):
            raise ModelFitError("non-finite curvature during optimization")
        try:
            d = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError as exc:
            raise ModelFitError("singular curvature surrogate") from exc
        if g @ d >= 0:
            d = -g  # numerically degenerate solve: fall back to steepest descent
        dmax = float(np.max(np.abs(d)))
        if dmax > _MAX_STEP_INF:
            d *= _MAX_STEP_INF / dmax
        # backtrack until Armijo holds, then expand while the value keeps
        # dropping: on near-degenerate shards the surface is a long flat
        # canyon and a single capped step would crawl
        step = 1.0
        nb = nf = nch = None
        for _ in range(60):
            cb = project(b + step * d)
            if not np.any(cb != b):
                break
            cf, cch = value(cb)
            if cf <= f + 1e-4 * float(g @ (cb - b)):
                nb, nf, nch = cb, cf, cch
                break
            step *= 0.5
        if nb is None:
            if _converged(gnorm, f, tol):
                return b
            raise ModelFitError("line search failed")
        for _ in range(60):
            cb = project(b + 2.0 * step * d)
            cf, cch = value(cb)
            if not (cf < nf):
                break
            step *= 2.0
            nb, nf, nch = cb, cf, cch
        b, f, ch = nb, nf, nch
    g = -(Xm.T @ (delta - ch)) + (r1 / b - 2.0 * tau / b**3)
    if _converged(float(np.max(np.abs(g))), f, tol):
        return b
    raise ModelFitError("optimizer did not converge")


def _lbfgsb_map(Xm, logt, delta, hyper: ImomHyper, start, tol, maxiter):
    """Bounded limited-memory BFGS fallback on the same objective."""
    r1, tau = hyper.r + 1.0, hyper.tau
    bounds = [(_MIN_ABS_COEF, None) if s > 0 else (None, -_MIN_ABS_COEF) for s in start]

    def neg_log_post(b):
        eta = Xm @ b
        ch = np.exp(np.minimum(logt + eta, _OPT_LOG_CAP))
        f = -(delta @ eta - ch.sum()) + np.sum(r1 * np.log(np.abs(b)) + tau / (b * b))
        g = -(Xm.T @ (delta - ch)) + (r1 / b - 2.0 * tau / b**3)
        return f, g

    with np.errstate(over="ignore"):
        res = minimize(
            neg_log_post, start, jac=True, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": maxiter, "ftol": 1e-13, "gtol": tol},
        )
    gnorm = float(np.max(np.abs(res.jac))) if res.jac is not None else np.inf
    if not _converged(gnorm, float(res.fun), tol):
        raise ModelFitError(f"optimizer did not converge: |g|={gnorm:.3g}")
    return res.x


def fit_map_coefficients(shard: ClusterShard, model: ModelIndex, hyper: ImomHyper,
                         config: SearchConfig):
    """Posterior-mode coefficients and the Hessian of the negative log posterior.

    Each coordinate starts at the prior mode with the sign suggested by the
    null-model screening score and stays on that side of the origin.  Raises
    ModelFitError (a soft failure) on non-convergence, an invalid mode or a
    non-finite Hessian.
    """
    model.validate_for(shard.p)
    q = model.size
    if q == 0:
        return EMPTY_COEF, np.empty((0, 0))
    cap = config.size_cap(shard.p, shard.n)
    if q > cap:
        raise ModelFitError(f"model size {q} exceeds shard cap {cap}")

    cols = list(model.indices)
    Xm = np.ascontiguousarray(shard.X[:, cols])
    logt, delta = shard.log_times, shard.events
    start = shard.null_start_signs()[cols] * hyper.mode

    with np.errstate(over="ignore"):
        try:
            beta = _newton_map(Xm, logt, delta, hyper, start, config.tol, config.max_opt_iter)
        except ModelFitError:
            beta = _lbfgsb_map(Xm, logt, delta, hyper, start, config.tol, config.max_opt_iter)

    s = logt + Xm @ beta
    if np.any(s > LOG_DBL_MAX):
        raise ModelFitError("cumulative hazard overflows at the fitted mode")
    w = np.exp(s)
    G = Xm.T @ (Xm * w[:, None]) - np.diag(imom_log_density_hess(beta, hyper))
    if not np.all(np.isfinite(G)):
        raise ModelFitError("non-finite Hessian at the fitted mode")
    return CoefficientVector(model, beta), G


def _hessian_logdet(G: np.ndarray) -> float:
    if G.shape[0] == 0:
        return 0.0
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise ModelFitError("indefinite Hessian at the fitted mode") from exc
    return float(2.0 * np.sum(np.log(np.diag(L))))


def log_laplace_model_score(shard: ClusterShard, model: ModelIndex, imom: ImomHyper,
                            model_prior: ModelPriorHyper, config: SearchConfig) -> ModelScore:
    """Laplace log model score, up to a model-independent constant.

    (|m|/2) log 2pi + loglik(b^) + sum slab(b^) + size prior - 0.5 log det G;
    the empty model needs no Laplace terms and scores exactly.
    """
    coef, G = fit_map_coefficients(shard, model, imom, config)
    size_prior = model_log_prior(model.size, model_prior)
    if model.size == 0:
        return ModelScore(model, coef, shard.log_likelihood(coef) + size_prior, 0.0)
    logdet = _hessian_logdet(G)
    ll = shard.log_likelihood(coef)
    score = (
        0.5 * model.size * LOG_2PI
        + ll
        + float(np.sum(imom_log_density(coef.values, imom)))
        + size_prior
        - 0.5 * logdet
    )
    if not np.isfinite(score):
        raise ModelFitError("non-finite Laplace score")
    return ModelScore(model, coef, score, logdet)


def screen_variables(shard: ClusterShard, current: ModelScore, screen_size: int) -> np.ndarray:
    """Current model's covariates plus the top-M by |residual' X_j|, ties to lower index."""
    r = shard.martingale_residuals(current.map_coef)
    scores = np.abs(shard.X.T @ r)
    top = np.argsort(-scores, kind="stable")[: min(screen_size, shard.p)]
    return np.union1d(top, np.asarray(current.model.indices, dtype=np.int64))


def neighborhoods(model: ModelIndex, screen_set, cap: int):
    """Screened addition moves and all deletion moves of the current model."""
    included = set(model.indices)
    adds = []
    if model.size < cap:
        adds = [model.with_added(v) for v in np.asarray(screen_set) if int(v) not in included]
    dels = [model.with_removed(v) for v in model.indices]
    return adds, dels


def _sample_by_score(scored: list[ModelScore], rng: np.random.Generator) -> ModelScore:
    """Sample proportionally to the posterior scores via a max-shifted softmax."""
    if len(scored) == 1:
        return scored[0]
    ls = np.array([m.log_score for m in scored])
    w = np.exp(ls - ls.max())
    return scored[rng.choice(len(scored), p=w / w.sum())]


def s5_search(shard: ClusterShard, init: ModelIndex, imom: ImomHyper,
              model_prior: ModelPriorHyper, config: SearchConfig,
              rng: np.random.Generator | None = None,
              score_cache: dict | None = None) -> SearchResult:
    """Screened shotgun stochastic search over the shard's model space.

    Returns the highest-scoring model encountered anywhere in the trace, not
    the final state of the walk.  Soft-failing candidates are skipped; if
    every candidate in both neighborhoods fails, the walk stays put and
    re-screens.  Deterministic given the generator.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    cache = {} if score_cache is None else score_cache
    cap = config.size_cap(shard.p, shard.n)
    result = SearchResult(best=None)

    def score(model: ModelIndex):
        key = (shard.key, model.indices)
        if key in cache:
            ms = cache[key]
        else:
            try:
                ms = log_laplace_model_score(shard, model, imom, model_prior, config)
            except ModelFitError:
                ms = None
                result.soft_failures += 1
            cache[key] = ms
            result.distinct_scored += 1
        if ms is not None:
            result.trace.append((model, ms.log_score))
            if result.best is None or ms.log_score > result.best.log_score:
                result.best = ms
        return ms

    current = score(init)
    if current is None:
        current = score(EMPTY_MODEL)  # always finite: no optimizer involved
    screen_set = screen_variables(shard, current, config.screen_size)

    for _ in range(config.iterations - 1):
        adds, dels = neighborhoods(current.model, screen_set, cap)
        scored_dels = [s for s in (score(m) for m in dels) if s is not None]
        scored_adds = [s for s in (score(m) for m in adds) if s is not None]
        picks = []
        if scored_dels:
            picks.append(_sample_by_score(scored_dels, rng))
        if scored_adds:
            picks.append(_sample_by_score(scored_adds, rng))
        if picks:
            current = _sample_by_score(picks, rng)
        screen_set = screen_variables(shard, current, config.screen_size)

    return result
