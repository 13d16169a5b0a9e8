"""Task to fit a single estimator."""
import luigi

from factorlens.core import CovMatrix, gaussian_loglik
from factorlens.exceptions import ParameterError
from factorlens.io import load_dataset, load_matrix, save_estimate
from factorlens.selection import parameter_kind
from factorlens.studies import make_learner

from .config import SolverConfig
from .factorlens_task import FactorLensTask


class FitEstimator(FactorLensTask):
    """Fit an estimator with a fixed parameter on a samples or covariance csv file."""

    input_path = luigi.Parameter(default="data.csv")
    estimator = luigi.ChoiceParameter(
        default="utm", choices=["urm", "utm", "em", "mrh", "tm", "stm"]
    )
    k = luigi.IntParameter(default=None)
    lam = luigi.FloatParameter(default=None)
    header = luigi.BoolParameter(default=False)
    covariance = luigi.BoolParameter(default=False)
    n = luigi.IntParameter(default=None)
    strict = luigi.BoolParameter(default=False)

    estimate_path = luigi.Parameter(default="out/estimate")

    def theta(self):
        """Rank K or penalty lambda, depending on the estimator."""
        kind = parameter_kind(self.estimator)
        theta = self.k if kind == "k" else self.lam
        if theta is None:
            raise ParameterError(f"{self.estimator} needs a value for its {kind}")
        return theta

    def run(self):
        """ """
        learner = make_learner(self.estimator, SolverConfig().options(), strict=self.strict)
        if self.covariance:
            cov = CovMatrix(load_matrix(self.input_path), n=self.n)
            estimate = learner(cov, self.theta())
            extra = {"avg_loglik": gaussian_loglik(estimate.sigma, cov.entries)}
            save_estimate(estimate, self.output().path, extra=extra)
        else:
            data = load_dataset(self.input_path, header=self.header)
            save_estimate(learner(data, self.theta()), self.output().path, data=data)

    def output(self):
        """ """
        return luigi.LocalTarget(self.estimate_path)
