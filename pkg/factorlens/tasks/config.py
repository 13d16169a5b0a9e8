"""Configuration classes for luigi tasks."""
import os

import luigi

from factorlens.selection import parameter_kind


def default_workers():
    """Number of processes from FACTORLENS_WORKERS, 1 if unset."""
    return int(os.environ.get("FACTORLENS_WORKERS", "1"))


class ParallelConfig(luigi.Config):
    """Parallelism of replication and grid loops."""

    n_workers = luigi.IntParameter(default=default_workers())


class SolverConfig(luigi.Config):
    """Iteration limits and tolerances of the iterative estimators."""

    em_max_iter = luigi.IntParameter(default=1000)
    em_rel_tol = luigi.FloatParameter(default=1e-3)
    tm_max_sweeps = luigi.IntParameter(default=200)
    tm_tol = luigi.FloatParameter(default=1e-6)
    stm_max_sweeps = luigi.IntParameter(default=200)
    stm_rel_tol = luigi.FloatParameter(default=1e-3)

    def options(self):
        """Solver options keyed by estimator prefix."""
        return {
            "em_max_iter": self.em_max_iter,
            "em_rel_tol": self.em_rel_tol,
            "tm_max_sweeps": self.tm_max_sweeps,
            "tm_tol": self.tm_tol,
            "stm_max_sweeps": self.stm_max_sweeps,
            "stm_rel_tol": self.stm_rel_tol,
        }


class HoldoutConfig(luigi.Config):
    """Random holdout split used for hyperparameter selection."""

    train_fraction = luigi.FloatParameter(default=0.7)


class GridConfig(luigi.Config):
    """Candidate grids; empty lists fall back to the default grids of each estimator."""

    k_grid = luigi.ListParameter(default=[])
    lambda_grid = luigi.ListParameter(default=[])

    def grids(self, estimators):
        """Explicit grids per estimator, only for the kinds that were configured."""
        configured = {"k": list(self.k_grid), "lambda": list(self.lambda_grid)}
        return {
            name: configured[parameter_kind(name)]
            for name in estimators
            if configured[parameter_kind(name)]
        }
