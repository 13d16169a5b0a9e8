"""Test aggregates and the equivalent data requirement."""
import numpy as np
import pandas as pd
import pytest

from factorlens import metrics
from factorlens.core import Dataset
from factorlens.exceptions import ParameterError


def test_aggregate():
    """ """
    mean, ci95 = metrics.aggregate([0.0, 2.0])
    assert mean == 1.0
    assert ci95 == pytest.approx(1.96 / np.sqrt(2))
    with pytest.raises(ParameterError):
        metrics.aggregate([1.0])


def test_paired_difference():
    """ """
    mean, ci95 = metrics.paired_difference([3.0, 5.0, 7.0], [1.0, 3.0, 5.0])
    assert mean == pytest.approx(2.0)
    assert ci95 == pytest.approx(0.0)
    with pytest.raises(ParameterError):
        metrics.paired_difference([1.0, 2.0], [1.0])


def test_experiment_report_single_score():
    """ """
    report = metrics.ExperimentReport.from_scores([1.5], selected_params=[3])
    assert report.mean == 1.5
    assert report.ci95 == 0.0
    assert report.to_frame()["theta"].tolist() == [3]
    assert report.to_dict()["per_replication"] == [1.5]


class PrefixEvaluator:
    """Score of a learner given by a function of the dataset size."""

    def __init__(self, baseline, challenger):
        self.scores = {"u1": baseline, "u2": challenger}

    def __call__(self, learner, dataset):
        return self.scores[learner](dataset.n)


DATA = Dataset(np.zeros((100, 2)))


def test_edr_interpolates():
    """Test gamma with a linear challenger score crossing the baseline at N/4."""
    evaluator = PrefixEvaluator(lambda n: 25.0, lambda n: float(n))
    result = metrics.equivalent_data_requirement("u1", "u2", DATA, 0.1, evaluator)
    assert result.gamma == pytest.approx(0.25)
    assert result.steps == 8
    assert not result.u2_worse and not result.floor


def test_edr_challenger_worse():
    """ """
    evaluator = PrefixEvaluator(lambda n: 200.0, lambda n: float(n))
    result = metrics.equivalent_data_requirement("u1", "u2", DATA, 0.1, evaluator)
    assert result.gamma == 1.0
    assert result.u2_worse


def test_edr_floor():
    """ """
    evaluator = PrefixEvaluator(lambda n: 0.0, lambda n: 1.0)
    result = metrics.equivalent_data_requirement("u1", "u2", DATA, 0.25, evaluator)
    assert result.floor
    assert result.gamma == 0.25


def test_edr_infinite_score():
    """Test that a -inf prefix score moves gamma one step back."""
    evaluator = PrefixEvaluator(lambda n: 50.0, lambda n: 100.0 if n > 60 else -np.inf)
    result = metrics.equivalent_data_requirement("u1", "u2", DATA, 0.1, evaluator)
    assert result.gamma == pytest.approx(0.7)
    with pytest.raises(ParameterError):
        metrics.equivalent_data_requirement("u1", "u2", DATA, 1.0, evaluator)


def test_summarize():
    """ """
    frame = pd.DataFrame(
        {
            "estimator": ["urm"] * 3 + ["utm"] * 2,
            "m": [10] * 5,
            "n": [20, 20, 40, 20, 20],
            "score": [1.0, 3.0, 5.0, 2.0, -np.inf],
        }
    )
    summary = metrics.summarize(frame, by=["estimator", "m", "n"])
    assert summary["mean"].tolist() == [2.0, 5.0, 2.0]
    assert summary["count"].tolist() == [2, 1, 2]
    assert summary["n_finite"].tolist() == [2, 1, 1]
    assert summary["log2_n_over_m"].tolist() == pytest.approx([1.0, 2.0, 1.0])
