"""Replication studies on synthetic data and the real-data protocol, as tidy tables."""
import logging
from dataclasses import replace

import numpy as np
import pandas as pd

from .core import expected_loglik
from .exceptions import ParameterError, SelectionError
from .metrics import equivalent_data_requirement, summarize
from .selection import (
    TEST_LEN,
    HoldoutPlan,
    Learner,
    default_grid,
    holdout_select,
    param_grid,
    realdata_protocol,
)
from .synth import generate
from .utils import derive_seed, parallel_map

L = logging.getLogger(__name__)

# EDR step sizes of the uniform and nonuniform residual experiments
UNIFORM_EDR_ALPHA = 0.02
NONUNIFORM_EDR_ALPHA = 0.10

SOLVER_OPTIONS = {
    "em": ("max_iter", "rel_tol"),
    "tm": ("max_sweeps", "tol"),
    "stm": ("max_sweeps", "rel_tol"),
}


def make_learner(name, solver_options=None, strict=False):
    """Learner with the solver options of its estimator.

    Args:
        name (str): estimator name
        solver_options (dict): options prefixed by estimator name, e.g. ``em_max_iter``
        strict (bool): raise on non-convergence instead of using the best iterate
    """
    solver_options = solver_options or {}
    kwargs = {
        option: solver_options[f"{name}_{option}"]
        for option in SOLVER_OPTIONS.get(name, ())
        if f"{name}_{option}" in solver_options
    }
    return Learner(name, strict=strict, **kwargs)


def _grids(estimators, grids, real_data=False):
    grids = dict(grids or {})
    return {
        name: param_grid(grids[name]) if name in grids else default_grid(name, real_data)
        for name in estimators
    }


def replication_spec(template, n, replication):
    """Synthetic spec of one (N, replication) cell, with a seed derived from N."""
    return replace(template, n=n, seed=derive_seed(template.seed, n), replication=replication)


class ReplicationWorker:
    """Draw one replication, select each estimator by holdout and score it against the truth."""

    def __init__(self, template, estimators, grids, train_fraction, solver_options):
        self.template = template
        self.estimators = estimators
        self.grids = grids
        self.train_fraction = train_fraction
        self.solver_options = solver_options

    def __call__(self, cell):
        n, replication = cell
        spec = replication_spec(self.template, n, replication)
        data, truth = generate(spec)
        plan = HoldoutPlan(self.train_fraction, seed=derive_seed(spec.seed, replication, 1))
        rows = []
        for name in self.estimators:
            learner = make_learner(name, self.solver_options)
            theta, estimate = holdout_select(learner, self.grids[name], data, plan)
            rows.append(
                {
                    "estimator": name,
                    "m": spec.m,
                    "k_star": spec.k_star,
                    "sigma_f": spec.sigma_f,
                    "sigma_r": spec.sigma_r,
                    "n": n,
                    "replication": replication,
                    "theta": theta,
                    "rank": estimate.rank,
                    "score": expected_loglik(estimate.sigma, truth.sigma_star),
                    "n_warnings": len(estimate.metadata.get("warnings", [])),
                }
            )
        return rows


def run_synth_study(
    template,
    ns,
    n_replications,
    estimators,
    grids=None,
    train_fraction=0.7,
    solver_options=None,
    n_workers=1,
):
    """Out-of-sample log-likelihood of cross-validated estimators on synthetic data.

    Args:
        template (SynthSpec): data settings, its n is replaced by each value of ns
        ns (list): sample sizes
        n_replications (int): replications per sample size
        estimators (list): estimator names
        grids (dict): candidate grids per estimator, defaults to the synthetic grids
        train_fraction (float): holdout training fraction
        solver_options (dict): see :func:`make_learner`
        n_workers (int): number of processes over (N, replication) cells

    Returns:
        tuple: (per-replication dataframe, summary dataframe)
    """
    worker = ReplicationWorker(
        template, list(estimators), _grids(estimators, grids), train_fraction, solver_options
    )
    cells = [(int(n), replication) for n in ns for replication in range(n_replications)]
    L.info("Running %s synthetic replications", len(cells))
    rows = [
        row
        for cell_rows in parallel_map(worker, cells, n_workers, desc="synth")
        for row in cell_rows
    ]
    scores = pd.DataFrame(rows)
    return scores, summarize(scores, by=["estimator", "m", "n"])


class HoldoutEvaluator:
    """Expected log-likelihood against the truth of the holdout-selected estimate.

    With ``reuse_theta``, the parameter selected on the first call for a learner is reused on
    later calls instead of running the holdout selection again.
    """

    def __init__(self, sigma_star, grids, plan, reuse_theta=False):
        self.sigma_star = sigma_star
        self.grids = grids
        self.plan = plan
        self.reuse_theta = reuse_theta
        self._thetas = {}

    def __call__(self, learner, dataset):
        if self.reuse_theta and learner.name in self._thetas:
            estimate = learner(dataset, self._thetas[learner.name])
        else:
            try:
                theta, estimate = holdout_select(
                    learner, self.grids[learner.name], dataset, self.plan
                )
            except (ParameterError, SelectionError) as exc:
                L.debug("No holdout estimate on %s samples: %s", dataset.n, exc)
                return -np.inf
            self._thetas[learner.name] = theta
        return expected_loglik(estimate.sigma, self.sigma_star)


class EdrWorker:
    """Equivalent data requirement of one replication."""

    def __init__(self, template, baseline, challenger, alpha, grids, options):
        self.template = template
        self.baseline = baseline
        self.challenger = challenger
        self.alpha = alpha
        self.grids = grids
        self.options = options

    def __call__(self, cell):
        n, replication = cell
        spec = replication_spec(self.template, n, replication)
        data, truth = generate(spec)
        plan = HoldoutPlan(
            self.options.get("train_fraction", 0.7), seed=derive_seed(spec.seed, replication, 1)
        )
        evaluator = HoldoutEvaluator(
            truth.sigma_star, self.grids, plan, reuse_theta=self.options.get("reuse_theta", False)
        )
        solver_options = self.options.get("solver_options")
        result = equivalent_data_requirement(
            make_learner(self.baseline, solver_options),
            make_learner(self.challenger, solver_options),
            data,
            self.alpha,
            evaluator,
        )
        return {
            "baseline": self.baseline,
            "challenger": self.challenger,
            "m": spec.m,
            "n": n,
            "replication": replication,
            "gamma": result.gamma,
            "u2_worse": result.u2_worse,
            "floor": result.floor,
            "steps": result.steps,
        }


def run_edr_study(
    template,
    ns,
    n_replications,
    baseline,
    challenger,
    alpha=UNIFORM_EDR_ALPHA,
    grids=None,
    train_fraction=0.7,
    reuse_theta=False,
    solver_options=None,
    n_workers=1,
):
    """Equivalent data requirement of challenger against baseline, per N and replication.

    Returns:
        tuple: (per-replication dataframe, summary dataframe of gamma per N)
    """
    options = {
        "train_fraction": train_fraction,
        "reuse_theta": reuse_theta,
        "solver_options": solver_options,
    }
    worker = EdrWorker(
        template, baseline, challenger, alpha, _grids([baseline, challenger], grids), options
    )
    cells = [(int(n), replication) for n in ns for replication in range(n_replications)]
    L.info("Running %s equivalent data requirement replications", len(cells))
    frame = pd.DataFrame(parallel_map(worker, cells, n_workers, desc="edr"))
    return frame, summarize(frame, by=["baseline", "challenger", "m", "n"], value="gamma")


def run_real_protocol(
    series,
    estimators,
    windows,
    grids=None,
    validation_anchors=None,
    evaluation_anchors=None,
    test_len=TEST_LEN,
    solver_options=None,
    n_workers=1,
):
    """Real-data protocol for each estimator and training window size.

    Returns:
        tuple: (one row per evaluation anchor, one summary row per estimator and window)
    """
    grids = _grids(estimators, grids, real_data=True)
    rows, summary = [], []
    for name in estimators:
        learner = make_learner(name, solver_options)
        for window_n in windows:
            report = realdata_protocol(
                learner,
                grids[name],
                series,
                int(window_n),
                validation_anchors=validation_anchors,
                evaluation_anchors=evaluation_anchors,
                test_len=test_len,
                n_workers=n_workers,
            )
            theta = report.selected_params[0]
            for anchor, score in zip(report.metadata["evaluation_anchors"], report.per_replication):
                rows.append(
                    {
                        "estimator": name,
                        "window_n": int(window_n),
                        "anchor": anchor,
                        "theta": theta,
                        "score": score,
                    }
                )
            summary.append(
                {
                    "estimator": name,
                    "window_n": int(window_n),
                    "theta": theta,
                    "mean": report.mean,
                    "ci95": report.ci95,
                }
            )
    return pd.DataFrame(rows), pd.DataFrame(summary)
