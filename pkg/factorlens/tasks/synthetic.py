"""Tasks for replication studies on synthetic data."""
import luigi

from factorlens.io import save_dataset, save_ground_truth, save_table
from factorlens.studies import UNIFORM_EDR_ALPHA, run_edr_study, run_synth_study
from factorlens.synth import SynthSpec, generate

from .factorlens_task import FactorLensTask


class SyntheticDataTask(FactorLensTask):
    """Settings of the synthetic factor model shared by the study tasks."""

    m = luigi.IntParameter(default=200)
    k_star = luigi.IntParameter(default=10)
    sigma_f = luigi.FloatParameter(default=5.0)
    sigma_r = luigi.FloatParameter(default=0.0)
    ns = luigi.ListParameter(default=[50, 100, 200, 400])
    n_replications = luigi.IntParameter(default=100)
    seed = luigi.IntParameter(default=0)

    def template(self):
        """Synthetic spec, its n is set per study cell."""
        return SynthSpec(
            m=self.m,
            k_star=self.k_star,
            sigma_f=self.sigma_f,
            n=max(self.ns),
            sigma_r=self.sigma_r,
            seed=self.seed,
        )


class SynthStudy(SyntheticDataTask):
    """Out-of-sample log-likelihood of cross-validated estimators."""

    estimators = luigi.ListParameter(default=["urm", "utm"])
    scores_path = luigi.Parameter(default="out/synth/scores.csv")
    summary_path = luigi.Parameter(default="out/synth/summary.csv")

    def run(self):
        """ """
        scores, summary = run_synth_study(
            self.template(),
            self.ns,
            self.n_replications,
            list(self.estimators),
            **self.study_settings(self.estimators),
        )
        save_table(scores, self.output()["scores"].path)
        save_table(summary, self.output()["summary"].path)

    def output(self):
        """ """
        return {
            "scores": luigi.LocalTarget(self.scores_path),
            "summary": luigi.LocalTarget(self.summary_path),
        }


class EdrStudy(SyntheticDataTask):
    """Equivalent data requirement of a challenger estimator against a baseline."""

    baseline = luigi.Parameter(default="urm")
    challenger = luigi.Parameter(default="utm")
    alpha = luigi.FloatParameter(default=UNIFORM_EDR_ALPHA)
    reuse_theta = luigi.BoolParameter(default=False)
    edr_path = luigi.Parameter(default="out/edr/edr.csv")
    summary_path = luigi.Parameter(default="out/edr/summary.csv")

    def run(self):
        """ """
        frame, summary = run_edr_study(
            self.template(),
            self.ns,
            self.n_replications,
            self.baseline,
            self.challenger,
            alpha=self.alpha,
            reuse_theta=self.reuse_theta,
            **self.study_settings([self.baseline, self.challenger]),
        )
        save_table(frame, self.output()["edr"].path)
        save_table(summary, self.output()["summary"].path)

    def output(self):
        """ """
        return {
            "edr": luigi.LocalTarget(self.edr_path),
            "summary": luigi.LocalTarget(self.summary_path),
        }


class SyntheticSample(FactorLensTask):
    """One synthetic draw, saved as a samples csv and a ground truth json sidecar."""

    m = luigi.IntParameter(default=200)
    k_star = luigi.IntParameter(default=10)
    sigma_f = luigi.FloatParameter(default=5.0)
    sigma_r = luigi.FloatParameter(default=0.0)
    n = luigi.IntParameter(default=100)
    seed = luigi.IntParameter(default=0)
    sample_folder = luigi.Parameter(default="out/sample")

    def run(self):
        """ """
        data, truth = generate(
            SynthSpec(
                m=self.m,
                k_star=self.k_star,
                sigma_f=self.sigma_f,
                n=self.n,
                sigma_r=self.sigma_r,
                seed=self.seed,
            )
        )
        save_dataset(data, self.output()["samples"].path)
        save_ground_truth(truth, self.output()["truth"].path)

    def output(self):
        """ """
        return {
            "samples": luigi.LocalTarget(f"{self.sample_folder}/samples.csv"),
            "truth": luigi.LocalTarget(f"{self.sample_folder}/truth.json"),
        }
