"""Test the numerical verification suite."""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from factorlens import oracles
from factorlens.core import sample_covariance
from factorlens.exceptions import ParameterError
from factorlens.nonuniform import tstep_solve
from factorlens.synth import sample_orthonormal


def test_prop2_closed_form():
    """ """
    q, ratio = oracles.prop2_eigvector_ratio(2, 2)
    assert q == pytest.approx((5 + np.sqrt(5)) / 2)
    assert ratio == pytest.approx((1 + np.sqrt(5)) / 2)
    for m, r in [(3, 2.0), (10, 7.5)]:
        assert_allclose(oracles.prop2_eigvector_ratio(m, r), oracles.prop2_numeric(m, r))
    with pytest.raises(ParameterError):
        oracles.prop2_eigvector_ratio(3, 1.0)


def test_prop3_closed_form():
    """ """
    q_plus, ratio = oracles.prop3_closed_form(3, 2, 2.0, 4.0)
    assert q_plus == pytest.approx((15 + np.sqrt(33)) / 8)
    assert ratio == pytest.approx(2.3722813232690143)
    assert oracles.prop3_idealized_tm(3, 2, 2.0, 4.0) == (1, pytest.approx(ratio))
    assert oracles.prop3_gstep_ratio(3, 2, 2.0, 4.0) == pytest.approx(ratio, rel=1e-10)


def test_prop3_rank_transition():
    """ """
    assert oracles.prop3_idealized_tm(5, 4, 0.9 * 10.0, 4.0)[0] == 1
    rank, ratio = oracles.prop3_idealized_tm(5, 4, 1.1 * 10.0, 4.0)
    assert rank == 0
    assert ratio is None
    with pytest.raises(ParameterError):
        oracles.prop3_gstep_ratio(5, 4, 11.0, 4.0)


@pytest.mark.parametrize(
    "verify", [oracles.verify_prop2, oracles.verify_prop3, oracles.verify_gstep]
)
def test_closed_form_sections_pass(verify):
    """ """
    assert verify()["status"] == "pass"


def test_gstep_kkt_residuals():
    """ """
    rng = np.random.default_rng(0)
    sample_cov = sample_covariance(rng.standard_normal((30, 6)))
    residuals = oracles.gstep_kkt_residuals(sample_cov, rng.uniform(0.5, 2.0, 6), 0.4)
    assert residuals["min_eig_g"] >= -1e-10
    assert residuals["min_eig_multiplier"] >= -1e-10
    assert residuals["complementarity"] <= 1e-10
    assert residuals["spectrum"] <= 1e-10


def test_optimal_eigenvalues():
    """ """
    rng = np.random.default_rng(1)
    basis = sample_orthonormal(rng, 5, 5)
    a = rng.standard_normal((5, 5))
    sigma_star = a @ a.T + np.eye(5)
    expected = oracles.optimal_eigenvalues(basis, sigma_star).h_star
    assert_allclose(np.diag(basis.T @ sigma_star @ basis), expected)
    assert_allclose(oracles.optimal_eigenvalues_bruteforce(basis, sigma_star), expected, rtol=1e-5)


def test_tstep_against_brute_force():
    """ """
    rng = np.random.default_rng(2)
    a = rng.standard_normal((6, 6))
    sigma = a @ a.T + np.eye(6)
    sample_cov = sample_covariance(rng.standard_normal((40, 6)) * rng.uniform(0.3, 3.0, 6))
    assert_allclose(
        tstep_solve(sigma, sample_cov).diag,
        oracles.brute_force_tstep(sigma, sample_cov),
        rtol=1e-5,
    )


def test_spiked_model():
    """ """
    model = oracles.SpikedModel(m=400, n=800, sigma2=1.0, spikes=(10.0,))
    assert model.rho == 0.5
    assert model.is_supercritical()
    assert model.population_variances[:2].tolist() == [10.0, 1.0]
    assert model.sample(np.random.default_rng(0)).shape == (800, 400)
    with pytest.raises(ParameterError):
        oracles.SpikedModel(m=4, n=8, sigma2=1.0, spikes=(0.5,))
    with pytest.raises(ParameterError):
        oracles.SpikedModel(m=4, n=8, sigma2=1.0, spikes=(2.0, 3.0))


def test_theorem2_bracket():
    """ """
    model = oracles.SpikedModel(m=400, n=800, sigma2=1.0, spikes=(10.0,))
    result = oracles.verify_theorem2(model, trials=2)
    assert result["bracket"] == pytest.approx([0.85, 1.0 + 1.0 / 9.0 + 0.15])
    assert result["spike_location"]["predicted"] == pytest.approx(10.0 + 5.0 / 9.0)
    assert result["lambda_guidance"]["correction"] == pytest.approx(1.0)

    subcritical = oracles.SpikedModel(m=400, n=100, sigma2=1.0, spikes=(2.0,))
    with pytest.raises(ParameterError):
        oracles.verify_theorem2(subcritical)


@pytest.mark.parametrize(
    "mean, stderr, expected",
    [(0.5, 0.0, True), (1.2, 0.1, True), (-0.15, 0.1, True), (1.3, 0.1, False), (-0.3, 0.1, False)],
)
def test_offset_decided_on_two_standard_errors(mean, stderr, expected):
    """ """
    assert oracles._overlaps_2se(mean, stderr, 0.0, 1.0) is expected


def test_trace_ratio_bound():
    """ """
    assert oracles.trace_ratio_bound(10, 0.1, np.ones(4)) == pytest.approx(2 * np.exp(-0.1))


def test_theorem1():
    """Test the UTM closed form against the reference semidefinite program."""
    result = oracles.verify_theorem1(n_instances=3)
    if result["status"] == "inconclusive":
        pytest.skip("reference solver did not reach an optimal status")
    assert result["status"] == "pass"
    assert result["max_error"] <= 1e-4


def test_theorem1_detects_wrong_estimator():
    """ """

    def shifted(sample_cov, lam, n):
        return oracles._utm_sigma(sample_cov, lam, n) + 0.1 * np.eye(len(sample_cov))

    result = oracles.verify_theorem1(n_instances=3, estimator=shifted)
    if result["n_inconclusive"] == 3:
        pytest.skip("reference solver did not reach an optimal status")
    assert result["status"] == "fail"


def test_run_verification():
    """ """
    report = oracles.run_verification(only=["prop2"])
    assert report["status"] == "pass"
    assert list(report["sections"]) == ["prop2"]
    assert report["schema_version"] == 1
    with pytest.raises(ParameterError):
        oracles.run_verification(only=["theorem9"])


def test_overall_status():
    """ """
    assert oracles.overall_status({"a": {"status": "pass"}, "b": {"status": "info"}}) == "pass"
    assert oracles.overall_status({"a": {"status": "inconclusive"}}) == "inconclusive"
    sections = {"a": {"status": "inconclusive"}, "b": {"status": "fail"}}
    assert oracles.overall_status(sections) == "fail"


def test_unknown_formulation():
    """ """
    with pytest.raises(ParameterError):
        oracles.sdp_reference_solve("eq5", np.eye(3), 10, 1.0)


@pytest.mark.slow
def test_theorem2():
    """ """
    model = oracles.SpikedModel(m=400, n=800, sigma2=1.0, spikes=(10.0,))
    assert oracles.verify_theorem2(model)["status"] == "pass"


@pytest.mark.slow
def test_prop1_trace():
    """ """
    model = oracles.SpikedModel(m=1000, n=10, sigma2=1.0, spikes=(10.0, 8.0, 6.0, 4.0, 2.0))
    result = oracles.verify_prop1_trace(model)
    assert result["status"] == "pass"
    assert result["mean_ratio"] == pytest.approx(1.0, abs=0.01)


@pytest.mark.slow
def test_tm_oracle():
    """ """
    result = oracles.verify_tm_oracle(n_instances=3)
    if result["status"] == "inconclusive":
        pytest.skip("reference solver did not reach an optimal status")
    assert result["status"] == "pass"
