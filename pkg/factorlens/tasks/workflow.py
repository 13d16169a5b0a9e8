"""Main tasks to run entire workflows."""
import luigi

from factorlens.studies import NONUNIFORM_EDR_ALPHA, UNIFORM_EDR_ALPHA

from .factorlens_task import FactorLensWrapperTask
from .synthetic import EdrStudy, SynthStudy


class ReproduceSyntheticStudies(FactorLensWrapperTask):
    """Uniform and nonuniform replication studies with the equivalent data requirement.

    The uniform study compares URM and UTM, the nonuniform ones compare MRH, EM, TM and STM
    for each residual spread, with the equivalent data requirement of STM against the other
    three.
    """

    rerun = luigi.BoolParameter(default=False)
    uniform_alpha = luigi.FloatParameter(default=UNIFORM_EDR_ALPHA)
    nonuniform_alpha = luigi.FloatParameter(default=NONUNIFORM_EDR_ALPHA)
    nonuniform_m = luigi.IntParameter(default=100)
    nonuniform_k_star = luigi.IntParameter(default=5)
    nonuniform_sigma_r = luigi.ListParameter(default=[0.5, 0.8])
    nonuniform_baselines = luigi.ListParameter(default=["em", "mrh", "tm"])

    def requires(self):
        """ """
        tasks = [
            SynthStudy(estimators=["urm", "utm"], rerun=self.rerun),
            EdrStudy(baseline="urm", challenger="utm", alpha=self.uniform_alpha, rerun=self.rerun),
        ]
        for sigma_r in self.nonuniform_sigma_r:
            folder = f"out/nonuniform_{sigma_r}"
            setting = {
                "m": self.nonuniform_m,
                "k_star": self.nonuniform_k_star,
                "sigma_r": sigma_r,
                "rerun": self.rerun,
            }
            tasks.append(
                SynthStudy(
                    estimators=["mrh", "em", "tm", "stm"],
                    scores_path=f"{folder}/scores.csv",
                    summary_path=f"{folder}/summary.csv",
                    **setting,
                )
            )
            for baseline in self.nonuniform_baselines:
                tasks.append(
                    EdrStudy(
                        baseline=baseline,
                        challenger="stm",
                        alpha=self.nonuniform_alpha,
                        edr_path=f"{folder}/edr_{baseline}.csv",
                        summary_path=f"{folder}/edr_{baseline}_summary.csv",
                        **setting,
                    )
                )
        return tasks
