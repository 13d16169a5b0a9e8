"""Task running the numerical verification suite."""
import luigi

from factorlens.io import save_json
from factorlens.oracles import DEFAULT_SOLVER, run_verification

from .factorlens_task import FactorLensTask


class VerifySuite(FactorLensTask):
    """Check the estimators against reference solvers and random matrix predictions."""

    only = luigi.ListParameter(default=[])
    seed = luigi.IntParameter(default=0)
    solver = luigi.Parameter(default=DEFAULT_SOLVER)
    report_path = luigi.Parameter(default="out/verify/report.json")

    def run(self):
        """ """
        report = run_verification(only=list(self.only) or None, seed=self.seed, solver=self.solver)
        save_json(report, self.output().path)

    def output(self):
        """ """
        return luigi.LocalTarget(self.report_path)
