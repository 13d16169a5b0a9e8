"""Tasks for the real-data protocol on daily prices."""
import luigi

from factorlens.findata import CLIP_COVERAGE, VOLATILITY_WINDOW, preprocess_prices
from factorlens.io import load_dataset, load_price_table, save_return_panel, save_table
from factorlens.selection import (
    ANCHOR_STEP,
    EVALUATION_START,
    N_ANCHORS,
    TEST_LEN,
    VALIDATION_START,
    anchors,
)
from factorlens.studies import run_real_protocol

from .factorlens_task import FactorLensTask


class PreprocessPrices(FactorLensTask):
    """Normalized log daily returns from an adjusted close price table."""

    prices_path = luigi.Parameter(default="prices.csv")
    window = luigi.IntParameter(default=VOLATILITY_WINDOW)
    coverage = luigi.FloatParameter(default=CLIP_COVERAGE)
    drop_degenerate = luigi.BoolParameter(default=False)
    returns_folder = luigi.Parameter(default="out/returns")

    def run(self):
        """ """
        panel = preprocess_prices(
            load_price_table(self.prices_path),
            window=self.window,
            coverage=self.coverage,
            drop_degenerate=self.drop_degenerate,
        )
        save_return_panel(panel, self.returns_folder)

    def output(self):
        """ """
        return {
            "returns": luigi.LocalTarget(f"{self.returns_folder}/returns.csv"),
            "metadata": luigi.LocalTarget(f"{self.returns_folder}/metadata.json"),
        }


class RealDataProtocol(FactorLensTask):
    """Select parameters on validation anchors and score estimators on evaluation anchors."""

    estimators = luigi.ListParameter(default=["urm", "utm", "mrh", "em", "tm", "stm"])
    windows = luigi.ListParameter(default=list(range(200, 1201, 100)))
    validation_start = luigi.IntParameter(default=VALIDATION_START)
    evaluation_start = luigi.IntParameter(default=EVALUATION_START)
    n_anchors = luigi.IntParameter(default=N_ANCHORS)
    anchor_step = luigi.IntParameter(default=ANCHOR_STEP)
    test_len = luigi.IntParameter(default=TEST_LEN)
    scores_path = luigi.Parameter(default="out/real/scores.csv")
    summary_path = luigi.Parameter(default="out/real/summary.csv")

    def requires(self):
        """ """
        return PreprocessPrices()

    def run(self):
        """ """
        series = load_dataset(self.input()["returns"].path)
        settings = self.study_settings(self.estimators)
        settings.pop("train_fraction")
        scores, summary = run_real_protocol(
            series,
            list(self.estimators),
            list(self.windows),
            validation_anchors=anchors(self.validation_start, self.n_anchors, self.anchor_step),
            evaluation_anchors=anchors(self.evaluation_start, self.n_anchors, self.anchor_step),
            test_len=self.test_len,
            **settings,
        )
        save_table(scores, self.output()["scores"].path)
        save_table(summary, self.output()["summary"].path)

    def output(self):
        """ """
        return {
            "scores": luigi.LocalTarget(self.scores_path),
            "summary": luigi.LocalTarget(self.summary_path),
        }
