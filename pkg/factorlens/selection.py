"""Hyperparameter selection by holdout validation and sliding-window testing."""
import logging
import math
from dataclasses import dataclass

import numpy as np

from .core import Dataset, avg_loglik
from .exceptions import ConvergenceError, ParameterError, SelectionError
from .metrics import ExperimentReport
from .nonuniform import em_fit, mrh_fit, stm_fit, tm_fit
from .uniform import urm_fit, urm_path, utm_fit, utm_path
from .utils import parallel_map

L = logging.getLogger(__name__)

SYNTH_K_GRID = tuple(range(0, 16))
SYNTH_LAMBDA_GRID = tuple(range(100, 401, 20))
REAL_K_GRID = tuple(range(0, 41))
REAL_LAMBDA_GRID = tuple(range(200, 601, 10))

PARAMETER_KIND = {
    "urm": "k",
    "mrh": "k",
    "em": "k",
    "utm": "lambda",
    "tm": "lambda",
    "stm": "lambda",
}
ESTIMATORS = tuple(PARAMETER_KIND)

VALIDATION_START = 1200
EVALUATION_START = 1300
ANCHOR_STEP = 10
N_ANCHORS = 10
TEST_LEN = 10


def parameter_kind(name):
    """'k' for rank-constrained estimators, 'lambda' for trace-penalized ones."""
    try:
        return PARAMETER_KIND[name]
    except KeyError as exc:
        raise ParameterError(f"Unknown estimator {name}, choose from {ESTIMATORS}") from exc


def default_grid(name, real_data=False):
    """Candidate grid used for an estimator."""
    if parameter_kind(name) == "k":
        return REAL_K_GRID if real_data else SYNTH_K_GRID
    return REAL_LAMBDA_GRID if real_data else SYNTH_LAMBDA_GRID


def param_grid(values=None, start=None, step=None, stop=None):
    """Validated grid from explicit values or an inclusive (start, step, stop) range.

    Returns:
        tuple: non-empty candidates, sorted without duplicates, integers when all inputs are
    """
    if values is None:
        if None in (start, step, stop):
            raise ParameterError("A grid needs either values or start, step and stop")
        if step <= 0:
            raise ParameterError(f"Grid step must be > 0, got {step}")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        values = [start + i * step for i in range(max(count, 0))]
    values = list(values)
    if not values:
        raise ParameterError("Empty parameter grid")
    if all(isinstance(value, (int, np.integer)) for value in values):
        values = [int(value) for value in values]
    else:
        values = [float(value) for value in values]
    if any(not np.isfinite(value) for value in values):
        raise ParameterError(f"Parameter grid has non-finite values {values}")
    return tuple(sorted(set(values)))


def _utm_estimate(data, lam, **kwargs):
    return utm_fit(data, lam, **kwargs).estimate


class Learner:
    """Estimator U(X, theta) with fixed solver settings.

    Args:
        name (str): one of urm, utm, em, mrh, tm, stm
        strict (bool): if False, a ConvergenceError returns its best iterate
        solver_kwargs: extra arguments of the fit function (max_iter, rel_tol, ...)
    """

    _fits = {
        "urm": urm_fit,
        "utm": _utm_estimate,
        "em": em_fit,
        "mrh": mrh_fit,
        "tm": tm_fit,
        "stm": stm_fit,
    }

    def __init__(self, name, strict=False, **solver_kwargs):
        """Init."""
        parameter_kind(name)
        self.name = name
        self.strict = strict
        self.solver_kwargs = solver_kwargs

    def __repr__(self):
        return f"Learner({self.name!r})"

    def __call__(self, data, theta):
        """Fit on data with parameter theta."""
        try:
            return self._fits[self.name](data, theta, **self.solver_kwargs)
        except ConvergenceError as exc:
            if self.strict or exc.best is None:
                raise
            L.warning(
                "%s(theta=%s) did not converge, using best iterate: %s", self.name, theta, exc
            )
            exc.best.add_warning(str(exc))
            return exc.best

    def path(self, data, thetas):
        """Fits for all thetas, sharing one eigendecomposition for URM and UTM."""
        if self.name == "urm":
            return urm_path(data, thetas)
        if self.name == "utm":
            return [solution.estimate for solution in utm_path(data, thetas)]
        return [self(data, theta) for theta in thetas]


@dataclass(frozen=True)
class HoldoutPlan:
    """Random split in a training part of ceil(train_fraction N) rows and a validation part."""

    train_fraction: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ParameterError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


def holdout_split(data, plan):
    """Return (training, validation) datasets, a partition of the rows of data."""
    n_train = math.ceil(round(plan.train_fraction * data.n, 9))
    if n_train < 1 or n_train >= data.n:
        raise ParameterError(f"Cannot split {data.n} samples with fraction {plan.train_fraction}")
    order = np.random.default_rng(plan.seed).permutation(data.n)
    return data.take(np.sort(order[:n_train])), data.take(np.sort(order[n_train:]))


class _ScoreWorker:
    """Fit on training data and score on validation data, for one candidate."""

    def __init__(self, learner, train, valid):
        self.learner = learner
        self.train = train
        self.valid = valid

    def __call__(self, theta):
        return avg_loglik(self.learner(self.train, theta).sigma, self.valid)


def _first_argmax(scores):
    scores = np.where(np.isnan(scores), -np.inf, np.asarray(scores, dtype=float))
    if not np.any(np.isfinite(scores)):
        return None
    return int(np.argmax(scores))


def validation_scores(learner, grid, train, valid, n_workers=1):
    """Average validation log-likelihood of each candidate fitted on the training part."""
    if learner.name in ("urm", "utm"):
        return [avg_loglik(est.sigma, valid) for est in learner.path(train, grid)]
    return parallel_map(_ScoreWorker(learner, train, valid), grid, n_workers, desc=learner.name)


def holdout_select(learner, grid, data, plan=HoldoutPlan(), n_workers=1):
    """Select theta on a random holdout split and refit on the full data.

    Ties are resolved in favour of the first candidate in grid order.

    Returns:
        tuple: (selected theta, estimate fitted on the full data)

    Raises:
        SelectionError: if every candidate has a -inf validation score
    """
    grid = param_grid(grid)
    train, valid = holdout_split(data, plan)
    scores = validation_scores(learner, grid, train, valid, n_workers=n_workers)
    best = _first_argmax(scores)
    if best is None:
        raise SelectionError(f"Every candidate of {learner.name} scored -inf on validation")
    theta = grid[best]
    L.debug("%s selected theta=%s from scores %s", learner.name, theta, scores)
    estimate = learner(data, theta)
    estimate.metadata["selection"] = {
        "theta": theta,
        "grid": list(grid),
        "validation_scores": [float(score) for score in scores],
        "n_train": train.n,
        "n_valid": valid.n,
    }
    return theta, estimate


@dataclass(frozen=True)
class WindowSpec:
    """Training rows t-N+1..t and test rows t+1..t+test_len, 1-indexed."""

    window_n: int
    t: int
    test_len: int = TEST_LEN

    def check(self, series_len):
        """Raise ParameterError if the window does not fit in a series of that length."""
        if self.window_n < 1 or self.test_len < 1:
            raise ParameterError("Window and test length must be >= 1")
        if self.t - self.window_n + 1 < 1 or self.t + self.test_len > series_len:
            raise ParameterError(
                f"Window N={self.window_n} at t={self.t} with test length {self.test_len} "
                f"does not fit in a series of length {series_len}"
            )

    def train_rows(self, series):
        """Training dataset."""
        return series.rows(self.t - self.window_n, self.t)

    def test_rows(self, series):
        """Test dataset."""
        return series.rows(self.t, self.t + self.test_len)


def sliding_window_test(learner, theta, series, spec):
    """Total test log-likelihood of the estimate trained on the window before t."""
    spec.check(series.n)
    estimate = learner(spec.train_rows(series), theta)
    return spec.test_len * avg_loglik(estimate.sigma, spec.test_rows(series))


class _WindowWorker:
    """Total test log-likelihood of every candidate at one anchor."""

    def __init__(self, learner, grid, series, window_n, test_len):
        self.learner = learner
        self.grid = grid
        self.series = series
        self.window_n = window_n
        self.test_len = test_len

    def __call__(self, anchor):
        spec = WindowSpec(self.window_n, anchor, self.test_len)
        test = spec.test_rows(self.series)
        estimates = self.learner.path(spec.train_rows(self.series), self.grid)
        return [self.test_len * avg_loglik(est.sigma, test) for est in estimates]


def anchors(start, n_anchors=N_ANCHORS, step=ANCHOR_STEP):
    """Anchor days start, start + step, ..."""
    return [start + step * j for j in range(n_anchors)]


def realdata_protocol(
    learner,
    grid,
    series,
    window_n,
    validation_anchors=None,
    evaluation_anchors=None,
    test_len=TEST_LEN,
    n_workers=1,
):
    """Select theta on validation anchors and report the average daily test log-likelihood.

    theta maximizes the sum over validation anchors of the total test log-likelihood; the
    reported performance is the sum over evaluation anchors divided by the number of test
    days, which is 1/100 of the sum for the default ten anchors of ten days.

    Args:
        learner (Learner): estimator
        grid (tuple): candidate parameters
        series (Dataset): normalized returns, rows in time order
        window_n (int): training window size N
        validation_anchors (list): 1-indexed anchor days used for selection, 1200..1290
        evaluation_anchors (list): 1-indexed anchor days used for evaluation, 1300..1390
        test_len (int): test horizon
        n_workers (int): number of processes

    Returns:
        ExperimentReport: per-anchor daily averages, their mean and the selected theta
    """
    grid = param_grid(grid)
    if not isinstance(series, Dataset):
        series = Dataset(series)
    if validation_anchors is None:
        validation_anchors = anchors(VALIDATION_START)
    if evaluation_anchors is None:
        evaluation_anchors = anchors(EVALUATION_START)
    validation_anchors, evaluation_anchors = list(validation_anchors), list(evaluation_anchors)
    if not validation_anchors or not evaluation_anchors:
        raise ParameterError("Validation and evaluation anchors must not be empty")
    for anchor in validation_anchors + evaluation_anchors:
        WindowSpec(window_n, anchor, test_len).check(series.n)

    worker = _WindowWorker(learner, grid, series, window_n, test_len)
    per_anchor = np.array(parallel_map(worker, validation_anchors, n_workers, desc="validation"))
    totals = per_anchor.sum(axis=0)
    best = _first_argmax(totals)
    if best is None:
        raise SelectionError(f"Every candidate of {learner.name} scored -inf on validation")
    theta = grid[best]

    worker = _WindowWorker(learner, (theta,), series, window_n, test_len)
    evaluation = [
        scores[0] / test_len
        for scores in parallel_map(worker, evaluation_anchors, n_workers, desc="evaluation")
    ]
    L.info("%s with N=%s selected theta=%s", learner.name, window_n, theta)
    return ExperimentReport.from_scores(
        evaluation,
        selected_params=[theta],
        metadata={
            "estimator": learner.name,
            "window_n": window_n,
            "validation_totals": totals.tolist(),
            "grid": list(grid),
            "validation_anchors": validation_anchors,
            "evaluation_anchors": evaluation_anchors,
            "test_len": test_len,
        },
    )
