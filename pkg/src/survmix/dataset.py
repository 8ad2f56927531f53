"""Survival data containers and exponential-baseline hazard likelihood.

The hazard faced by subject i is exp(x_i' beta) (constant baseline), so the
log likelihood of an observed pair (t_i, delta_i) is

    delta_i * eta_i - t_i * exp(eta_i),        eta_i = x_i' beta,

with the cumulative hazard evaluated as exp(log t_i + eta_i) so that linear
predictors of several hundred in magnitude survive in log space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

# exp() overflows past this; used to detect the -inf likelihood sentinel
LOG_DBL_MAX = float(np.log(np.finfo(np.float64).max))


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """Observed times, event indicators and covariates for n subjects.

    times   : (n,) strictly positive observed times
    events  : (n,) 1 = event observed, 0 = censored
    design  : (n, p) covariate matrix, complete cases only
    names   : p covariate labels
    """

    times: np.ndarray
    events: np.ndarray
    design: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        times = _readonly(np.asarray(self.times, dtype=float))
        events = _readonly(np.asarray(self.events, dtype=int))
        design = _readonly(np.asarray(self.design, dtype=float))
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "events", events)
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "names", tuple(str(s) for s in self.names))
        if design.ndim != 2:
            raise DataError("design must be a 2-d matrix")
        n, p = design.shape
        if n < 1 or p < 1:
            raise DataError("need at least one subject and one covariate")
        if times.shape != (n,) or events.shape != (n,):
            raise DataError("times/events length does not match design rows")
        if len(self.names) != p:
            raise DataError("names length does not match design columns")
        if not np.all(np.isfinite(times)) or np.any(times <= 0):
            raise DataError("all times must be strictly positive and finite")
        if not np.isin(events, (0, 1)).all():
            raise DataError("events must be 0 or 1")
        if not np.all(np.isfinite(design)):
            raise DataError("design contains non-finite values")
        object.__setattr__(self, "log_times", _readonly(np.log(times)))

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def p(self) -> int:
        return self.design.shape[1]


@dataclass(frozen=True, order=True)
class ModelIndex:
    """A model: the strictly increasing tuple of included covariate indices."""

    indices: tuple[int, ...] = ()

    def __post_init__(self):
        idx = tuple(int(j) for j in self.indices)
        object.__setattr__(self, "indices", idx)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise DataError(f"model indices must be strictly increasing: {idx}")
        if idx and idx[0] < 0:
            raise DataError(f"negative covariate index: {idx}")

    @property
    def size(self) -> int:
        return len(self.indices)

    def validate_for(self, p: int) -> None:
        if self.indices and self.indices[-1] >= p:
            raise DataError(f"covariate index {self.indices[-1]} out of range for p={p}")

    def with_added(self, j: int) -> "ModelIndex":
        return ModelIndex(tuple(sorted(self.indices + (int(j),))))

    def with_removed(self, j: int) -> "ModelIndex":
        return ModelIndex(tuple(i for i in self.indices if i != j))

    def __contains__(self, j: int) -> bool:
        return j in self.indices


@dataclass(frozen=True, eq=False)
class CoefficientVector:
    """Coefficients restricted to a model; excluded coordinates are exact zeros.

    The slab prior has zero density at the origin, so an included coefficient
    is never exactly 0; construction enforces that.
    """

    model: ModelIndex
    values: np.ndarray

    def __post_init__(self):
        values = _readonly(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "values", values)
        if values.shape != (self.model.size,):
            raise DataError("coefficient count does not match model size")
        if values.size and not np.all(np.isfinite(values)):
            raise DataError("coefficients must be finite")
        if values.size and np.any(values == 0.0):
            raise DataError("an included coefficient cannot be exactly zero")

    def dense(self, p: int) -> np.ndarray:
        """Full-length coefficient vector with zeros off the model."""
        out = np.zeros(p)
        if self.model.size:
            out[list(self.model.indices)] = self.values
        return out


EMPTY_MODEL = ModelIndex(())
EMPTY_COEF = CoefficientVector(EMPTY_MODEL, np.empty(0))


def _rows_index(dataset: SurvivalDataset, rows) -> np.ndarray:
    if rows is None:
        return np.arange(dataset.n)
    rows = np.asarray(rows, dtype=int)
    if rows.size and (rows.min() < 0 or rows.max() >= dataset.n):
        raise DataError("row index out of range")
    return rows


def linear_predictor(dataset: SurvivalDataset, coef: CoefficientVector, rows=None) -> np.ndarray:
    """eta_i = sum_{j in model} X[i, j] * beta_j for the selected rows."""
    rows = _rows_index(dataset, rows)
    coef.model.validate_for(dataset.p)
    if coef.model.size == 0:
        return np.zeros(rows.size)
    cols = list(coef.model.indices)
    return dataset.design[np.ix_(rows, cols)] @ coef.values


def log_likelihood(dataset: SurvivalDataset, coef: CoefficientVector, rows=None) -> float:
    """Sum of delta*eta - exp(log t + eta) over the rows.

    Returns -inf (soft sentinel, not an exception) when the cumulative hazard
    overflows the double range; callers treat such a model as having zero
    likelihood.
    """
    rows = _rows_index(dataset, rows)
    if rows.size == 0:
        raise DataError("log_likelihood needs a nonempty row set")
    eta = linear_predictor(dataset, coef, rows)
    s = dataset.log_times[rows] + eta
    if np.any(s > LOG_DBL_MAX):
        return float("-inf")
    with np.errstate(over="ignore"):
        cumhaz = np.exp(s)
    total = float(np.dot(dataset.events[rows], eta) - cumhaz.sum())
    return total if np.isfinite(total) else float("-inf")


def survival_probability(t, eta):
    """S(t | eta) = exp(-t * exp(eta)); strictly positive t required."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DataError("survival_probability requires t > 0")
    with np.errstate(over="ignore"):
        out = np.exp(-np.exp(np.log(t) + np.asarray(eta, dtype=float)))
    return out if out.ndim else float(out)


def martingale_residuals(dataset: SurvivalDataset, coef: CoefficientVector, rows=None) -> np.ndarray:
    """r_i = delta_i - exp(log t_i + eta_i), the event count minus cumulative hazard."""
    rows = _rows_index(dataset, rows)
    eta = linear_predictor(dataset, coef, rows)
    with np.errstate(over="ignore"):
        cumhaz = np.exp(dataset.log_times[rows] + eta)
    return dataset.events[rows] - cumhaz


@dataclass(frozen=True)
class StandardizeTransform:
    """Per-column center/scale recorded so fits can be reported on the original scale."""

    mean: np.ndarray
    scale: np.ndarray

    def coef_to_original(self, coef: CoefficientVector) -> CoefficientVector:
        """Map coefficients fitted on the standardized design back to raw-covariate units."""
        if coef.model.size == 0:
            return coef
        cols = list(coef.model.indices)
        return CoefficientVector(coef.model, coef.values / self.scale[cols])


def _column_scale(dataset: SurvivalDataset) -> np.ndarray:
    if dataset.n > 1:
        scale = dataset.design.std(axis=0, ddof=1)
    else:
        scale = np.zeros(dataset.p)
    bad = np.flatnonzero(scale == 0.0)
    if bad.size:
        raise DataError(f"column '{dataset.names[bad[0]]}' is constant (zero variance)")
    return scale


def standardize_design(dataset: SurvivalDataset):
    """Center and scale every column to sample mean 0, sample sd 1 (ddof=1).

    Returns the transformed dataset and the transform. A constant column is a
    hard error naming the offending covariate.
    """
    scale = _column_scale(dataset)
    mean = dataset.design.mean(axis=0)
    standardized = SurvivalDataset(
        times=dataset.times,
        events=dataset.events,
        design=(dataset.design - mean) / scale,
        names=dataset.names,
    )
    return standardized, StandardizeTransform(mean=mean, scale=scale)


def scale_design(dataset: SurvivalDataset):
    """Scale every column to unit sample sd without centering.

    The hazard model has no intercept, so centering would shift the linear
    predictor by an inexpressible constant; screening only needs columns on
    a common scale.  Used by the fit pipeline; coefficients map back through
    the same transform.
    """
    scale = _column_scale(dataset)
    scaled = SurvivalDataset(
        times=dataset.times,
        events=dataset.events,
        design=dataset.design / scale,
        names=dataset.names,
    )
    return scaled, StandardizeTransform(mean=np.zeros(dataset.p), scale=scale)
