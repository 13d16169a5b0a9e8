"""Test holdout selection and the sliding-window protocol."""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from factorlens import selection
from factorlens.core import Dataset
from factorlens.exceptions import ConvergenceError, ParameterError, SelectionError
from factorlens.synth import SynthSpec, gen_nonuniform, gen_uniform


def test_param_grid():
    """ """
    assert selection.param_grid(start=100, step=20, stop=400) == tuple(range(100, 401, 20))
    assert selection.param_grid([0.5, 1.0]) == (0.5, 1.0)
    assert selection.param_grid(np.arange(3)) == (0, 1, 2)
    assert selection.param_grid(start=0.1, step=0.1, stop=0.3) == pytest.approx((0.1, 0.2, 0.3))

    with pytest.raises(ParameterError):
        selection.param_grid([])
    assert selection.param_grid([300, 100, 200, 100]) == (100, 200, 300)
    assert selection.param_grid([1, 1]) == (1,)

    with pytest.raises(ParameterError):
        selection.param_grid([1.0, np.nan])
    with pytest.raises(ParameterError):
        selection.param_grid(start=0, step=0, stop=3)
    with pytest.raises(ParameterError):
        selection.param_grid(start=0, stop=3)


def test_default_grid():
    """ """
    assert selection.default_grid("urm") == tuple(range(16))
    assert selection.default_grid("stm", real_data=True) == tuple(range(200, 601, 10))
    with pytest.raises(ParameterError):
        selection.default_grid("pca")


@pytest.mark.parametrize("n", [4, 10, 11, 57])
def test_holdout_split_partition(n):
    """ """
    data = Dataset(np.arange(n, dtype=float)[:, None] * np.ones((1, 2)))
    train, valid = selection.holdout_split(data, selection.HoldoutPlan(0.7, seed=3))
    assert train.n == int(np.ceil(0.7 * n - 1e-9))
    rows = np.concatenate([train.samples[:, 0], valid.samples[:, 0]])
    assert sorted(rows) == list(range(n))


def test_holdout_split_too_small():
    """ """
    with pytest.raises(ParameterError):
        selection.holdout_split(Dataset(np.ones((1, 2))), selection.HoldoutPlan())
    with pytest.raises(ParameterError):
        selection.HoldoutPlan(train_fraction=1.0)


def test_first_argmax():
    """ """
    assert selection._first_argmax([1.0, 3.0, 3.0]) == 1
    assert selection._first_argmax([np.nan, -np.inf, 2.0]) == 2
    assert selection._first_argmax([-np.inf, np.nan]) is None


def test_holdout_select_records_selection():
    """ """
    data, _ = gen_uniform(SynthSpec(m=20, k_star=2, sigma_f=5.0, n=100, seed=1))
    learner = selection.Learner("urm")
    theta, estimate = selection.holdout_select(learner, range(6), data)
    record = estimate.metadata["selection"]
    assert theta == record["theta"]
    assert record["n_train"] == 70 and record["n_valid"] == 30
    assert np.argmax(record["validation_scores"]) == record["grid"].index(theta)
    assert estimate.rank == theta


def test_path_matches_single_fits():
    """ """
    data, _ = gen_uniform(SynthSpec(m=10, k_star=2, sigma_f=3.0, n=40, seed=2))
    learner = selection.Learner("utm")
    for lam, estimate in zip((5.0, 20.0), learner.path(data, (5.0, 20.0))):
        assert_allclose(estimate.sigma, learner(data, lam).sigma)


def test_selection_error_on_singular_candidates():
    """Test that a rank-1 dataset makes every URM candidate singular."""
    z = np.random.default_rng(0).standard_normal(20)
    data = Dataset(z[:, None] * np.array([1.0, 2.0, 3.0]))
    with pytest.raises(SelectionError):
        selection.holdout_select(selection.Learner("urm"), (1, 2), data)


def test_learner_strict():
    """ """
    data, _ = gen_nonuniform(SynthSpec(m=8, k_star=2, sigma_f=3.0, n=40, sigma_r=0.8, seed=0))
    estimate = selection.Learner("tm", max_sweeps=1)(data, 5.0)
    assert estimate.metadata["warnings"]
    with pytest.raises(ConvergenceError):
        selection.Learner("tm", strict=True, max_sweeps=1)(data, 5.0)
    with pytest.raises(ParameterError):
        selection.Learner("pca")


def test_window_spec():
    """ """
    series = Dataset(np.arange(1, 31, dtype=float)[:, None] * np.ones((1, 2)))
    spec = selection.WindowSpec(window_n=5, t=10, test_len=3)
    spec.check(series.n)
    assert_allclose(spec.train_rows(series).samples[:, 0], [6, 7, 8, 9, 10])
    assert_allclose(spec.test_rows(series).samples[:, 0], [11, 12, 13])

    with pytest.raises(ParameterError):
        selection.WindowSpec(window_n=11, t=10).check(series.n)
    with pytest.raises(ParameterError):
        selection.WindowSpec(window_n=5, t=25, test_len=10).check(series.n)
    with pytest.raises(ParameterError):
        selection.WindowSpec(window_n=0, t=10).check(series.n)


def test_realdata_protocol():
    """Test the reported mean against direct sliding-window tests."""
    series = Dataset(np.random.default_rng(5).standard_normal((200, 5)))
    learner = selection.Learner("urm")
    evaluation = selection.anchors(100, n_anchors=10, step=10)
    report = selection.realdata_protocol(
        learner,
        (0, 1, 2),
        series,
        50,
        validation_anchors=[60, 70],
        evaluation_anchors=evaluation,
    )
    theta = report.selected_params[0]
    assert theta in (0, 1, 2)
    assert report.metadata["validation_totals"][(0, 1, 2).index(theta)] == pytest.approx(
        max(report.metadata["validation_totals"])
    )
    total = sum(
        selection.sliding_window_test(learner, theta, series, selection.WindowSpec(50, t))
        for t in evaluation
    )
    assert report.mean == pytest.approx(total / 100)
    assert len(report.per_replication) == 10


def test_realdata_protocol_window_too_large():
    """ """
    series = Dataset(np.ones((100, 3)) + np.eye(3)[np.arange(100) % 3])
    with pytest.raises(ParameterError):
        selection.realdata_protocol(
            selection.Learner("urm"), (0, 1), series, 80, validation_anchors=[60]
        )


def test_holdout_select_ignores_duplicate_candidates():
    """ """
    data, _ = gen_uniform(SynthSpec(m=12, k_star=2, sigma_f=4.0, n=60, seed=4))
    learner = selection.Learner("urm")
    theta, estimate = selection.holdout_select(learner, range(6), data)
    theta_dup, estimate_dup = selection.holdout_select(learner, [5, 0, 1, 1, 2, 3, 4, 0, 5], data)
    assert theta_dup == theta
    assert_allclose(estimate_dup.sigma, estimate.sigma)


def test_urm_holdout_finds_true_rank():
    """Test that the selected K is 3 most often over 20 seeds."""
    learner = selection.Learner("urm")
    selected = [
        selection.holdout_select(
            learner,
            range(9),
            gen_uniform(SynthSpec(m=20, k_star=3, sigma_f=5.0, n=400, seed=seed))[0],
            plan=selection.HoldoutPlan(seed=seed),
        )[0]
        for seed in range(20)
    ]
    values, counts = np.unique(selected, return_counts=True)
    assert values[np.argmax(counts)] == 3


def test_window_spec_indices():
    """Test the rows used at t=1200 with N=200 on a series of 1400 days."""
    series = Dataset(np.arange(1, 1401, dtype=float)[:, None])
    spec = selection.WindowSpec(window_n=200, t=1200)
    spec.check(series.n)
    assert_allclose(spec.train_rows(series).samples[:, 0], np.arange(1001, 1201))
    assert_allclose(spec.test_rows(series).samples[:, 0], np.arange(1201, 1211))


def test_realdata_protocol_empty_anchors():
    """ """
    series = Dataset(np.random.default_rng(5).standard_normal((200, 5)))
    learner = selection.Learner("urm")
    with pytest.raises(ParameterError):
        selection.realdata_protocol(learner, (0, 1), series, 50, validation_anchors=[])
    with pytest.raises(ParameterError):
        selection.realdata_protocol(
            learner, (0, 1), series, 50, validation_anchors=[60], evaluation_anchors=[]
        )
