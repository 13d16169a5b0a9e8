"""Estimators with general residual variances: MRH, EM, TM and STM."""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize

from .core import (
    FactorModelEstimate,
    as_covariance,
    eigh_desc,
    gaussian_loglik,
    inverse_or_none,
    logdet,
    symmetrize,
)
from .exceptions import ConvergenceError, DegenerateInputError, ParameterError
from .uniform import check_k, check_n, urm_coefficients, utm_fit

L = logging.getLogger(__name__)

RESIDUAL_FLOOR = 1e-8


@dataclass(frozen=True)
class ScalingMatrix:
    """Positive diagonal scaling T, stored as its diagonal."""

    diag: np.ndarray
    iterations: int = 0

    @property
    def log_det(self):
        """Sum of log t_i."""
        return float(np.sum(np.log(self.diag)))


def _mrh_from_cov(cov, k, n=None):
    m = len(cov)
    check_k(k, m)
    eig = eigh_desc(cov)
    coefficients, sigma2, n_clamped = urm_coefficients(eig.values, k)
    loadings = eig.basis[:, :k] * np.sqrt(coefficients)
    residual = np.diag(cov) - np.sum(loadings**2, axis=1)
    estimate = FactorModelEstimate.from_parts(
        loadings,
        np.maximum(residual, 0.0),
        metadata={"estimator": "mrh", "k": int(k), "sigma2": sigma2, "n": n},
    )
    if n_clamped:
        L.warning("MRH clamped %s negative factor coefficients to 0 (K=%s)", n_clamped, k)
        estimate.add_warning(f"clamped {n_clamped} negative factor coefficients")
    return estimate


def mrh_fit(data_or_cov, k, n=None):
    """Marginal-variance-preserving rank-constrained heuristic.

    Factors are those of URM, residual variances are chosen so that the diagonal of the
    estimate equals the diagonal of the sample covariance.
    """
    cov, n = as_covariance(data_or_cov, n=n)
    return _mrh_from_cov(cov, k, n)


def _em_step(cov, loadings, residual):
    """One EM update of zero-mean factor analysis."""
    k = loadings.shape[1]
    if k == 0:
        return loadings, np.diag(cov).copy()

    scaled = loadings / residual[:, None]
    beta = linalg.solve(np.eye(k) + loadings.T @ scaled, scaled.T, assume_a="pos")
    cov_beta = cov @ beta.T
    second_moment = np.eye(k) - beta @ loadings + beta @ cov_beta
    new_loadings = linalg.solve(second_moment, cov_beta.T, assume_a="pos").T
    new_residual = np.diag(cov) - np.sum(new_loadings * cov_beta, axis=1)
    return new_loadings, new_residual


def _em_loglik(cov, loadings, residual):
    sigma = loadings @ loadings.T + np.diag(residual)
    return gaussian_loglik(sigma, cov)


def em_fit(data_or_cov, k, max_iter=1000, rel_tol=1e-3, init=None, n=None):
    """Maximum likelihood factor analysis with K factors, by expectation-maximization.

    Iterations stop when max_i |R_new - R| / R < rel_tol. Residual variances are floored at
    1e-8 times the average sample variance.

    Args:
        data_or_cov (Dataset|CovMatrix|ndarray): samples or sample covariance
        k (int): number of factors
        max_iter (int): maximum number of iterations
        rel_tol (float): relative tolerance on the residual variances
        init (FactorModelEstimate): initial estimate with K factors, MRH by default
        n (int): sample count, with a precomputed covariance
    """
    if max_iter < 1 or rel_tol <= 0:
        raise ParameterError("EM needs max_iter >= 1 and rel_tol > 0")
    cov, n = as_covariance(data_or_cov, n=n)
    check_k(k, len(cov))
    floor = RESIDUAL_FLOOR * float(np.mean(np.diag(cov)))
    if floor <= 0:
        raise DegenerateInputError("Sample covariance has a zero trace")

    if init is None:
        init = _mrh_from_cov(cov, k, n)
    if init.rank != k:
        raise ParameterError(f"Initial estimate has {init.rank} factors, expected {k}")
    loadings = np.array(init.loadings)
    residual = np.maximum(np.array(init.residual), floor)

    trace = [_em_loglik(cov, loadings, residual)]
    n_floored = 0
    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        new_loadings, new_residual = _em_step(cov, loadings, residual)
        below = new_residual < floor
        if np.any(below):
            n_floored += int(np.sum(below))
            new_residual = np.where(below, floor, new_residual)
        change = np.max(np.abs(new_residual - residual) / residual)
        loadings, residual = new_loadings, new_residual
        trace.append(_em_loglik(cov, loadings, residual))
        L.debug("EM iteration %s, relative change %s, loglik %s", iteration, change, trace[-1])
        if change < rel_tol:
            converged = True
            break

    estimate = FactorModelEstimate.from_parts(
        loadings,
        residual,
        metadata={
            "estimator": "em",
            "k": int(k),
            "n": n,
            "iterations": iteration,
            "converged": converged,
            "rel_tol": rel_tol,
            "floor": floor,
            "loglik_trace": trace,
        },
    )
    if n_floored:
        L.warning("EM clamped residual variances to the floor %s times", n_floored)
        estimate.add_warning(f"residual variances clamped to floor {floor} ({n_floored} times)")
    if not converged:
        L.warning("EM stopped after %s iterations without reaching rel_tol=%s", max_iter, rel_tol)
        estimate.add_warning(f"not converged after {max_iter} iterations")
    return estimate


def gstep_solve(sample_cov, v_diag, lam_prime):
    """Optimal sigma for a fixed diagonal V in the trace-penalized problem.

    With U D U^T the eigendecomposition of V^1/2 (S - lam_prime I) V^1/2, the solution is
    sigma = V^-1/2 U max(D, 1) U^T V^-1/2, returned in factor form with residual 1/V.

    Args:
        sample_cov (ndarray): sample covariance S
        v_diag (ndarray): positive diagonal of V
        lam_prime (float): effective penalty 2 lambda / N
    """
    v_diag = np.asarray(v_diag, dtype=float)
    if np.any(v_diag <= 0):
        raise ParameterError("V must have a positive diagonal")
    sqrt_v = np.sqrt(v_diag)
    shifted = np.asarray(sample_cov, dtype=float) - lam_prime * np.eye(len(v_diag))
    eig = eigh_desc(symmetrize(shifted * np.outer(sqrt_v, sqrt_v)))
    keep = eig.values > 1.0
    loadings = eig.basis[:, keep] * np.sqrt(eig.values[keep] - 1.0) / sqrt_v[:, None]
    return FactorModelEstimate.from_parts(
        loadings, 1.0 / v_diag, metadata={"gstep_eigenvalues": eig.values.tolist()}
    )


def tm_objective(sigma, v_diag, sample_cov, lam_prime):
    """log det P - tr(P S) - lam_prime tr(G) with P = sigma^-1 = V - G."""
    precision = inverse_or_none(sigma)
    if precision is None:
        return -np.inf
    trace_g = np.sum(v_diag) - np.trace(precision)
    return -logdet(sigma) - np.sum(precision * sample_cov) - lam_prime * trace_g


def _v_objective(v_diag, g_matrix, diag_cov):
    """Part of the objective depending on V when G is fixed, -inf outside the domain."""
    precision = np.diag(v_diag) - g_matrix
    try:
        factor = linalg.cholesky(precision, lower=True)
    except linalg.LinAlgError:
        return -np.inf
    return 2.0 * np.sum(np.log(np.diag(factor))) - v_diag @ diag_cov


def _v_step(v_diag, g_matrix, diag_cov, max_iter=50, tol=1e-14):
    """Maximize over V with G fixed, by damped Newton with backtracking."""
    value = _v_objective(v_diag, g_matrix, diag_cov)
    for _ in range(max_iter):
        sigma = linalg.inv(np.diag(v_diag) - g_matrix)
        gradient = np.diag(sigma) - diag_cov
        direction = linalg.solve(sigma * sigma, gradient, assume_a="pos")
        slope = gradient @ direction
        if slope <= tol * max(1.0, abs(value)):
            break
        step = 1.0
        while step > 1e-12:
            candidate = v_diag + step * direction
            if np.all(candidate > 0):
                new_value = _v_objective(candidate, g_matrix, diag_cov)
                if new_value >= value + 1e-4 * step * slope:
                    break
            step *= 0.5
        else:
            break
        v_diag, value = candidate, new_value
    return v_diag


def _tm_profiled_ascent(cov, diag_cov, lam_prime, max_iter, gtol):
    """Quasi-Newton ascent over V with G re-solved exactly at every evaluation.

    Works in w = V diag(S), where the gradient of the objective is sigma_ii / S_ii - 1. The
    maximizer has w >= 1 since sigma dominates V^-1.

    Returns:
        tuple: (v_diag, number of iterations, objective values along the iterates)
    """

    def negative(w):
        v_diag = w / diag_cov
        estimate = gstep_solve(cov, v_diag, lam_prime)
        value = tm_objective(estimate.sigma, v_diag, cov, lam_prime)
        return -value, 1.0 - np.diag(estimate.sigma) / diag_cov

    start = np.ones(len(diag_cov))
    trace = [-negative(start)[0]]
    result = optimize.minimize(
        negative,
        start,
        jac=True,
        method="L-BFGS-B",
        bounds=[(1.0, None)] * len(diag_cov),
        callback=lambda w: trace.append(-negative(w)[0]),
        options={"maxiter": max_iter, "gtol": gtol, "ftol": 0.0},
    )
    L.debug("TM quasi-Newton stage: %s after %s iterations", result.message, result.nit)
    return result.x / diag_cov, int(result.nit), trace


def tm_fit(data_or_cov, lam, n=None, max_sweeps=200, tol=1e-6):
    """Trace-penalized estimate with a free diagonal V, sigma^-1 = V - G.

    The G-step is the closed form of :func:`gstep_solve`. V is first updated by L-BFGS on the
    objective with G maximized out, then by block coordinate sweeps alternating the G-step
    with a damped Newton V-step. Each stage runs at most max_sweeps iterations. Stops when
    max_i |sigma_ii - S_ii| <= tol max_i S_ii, which is first-order stationarity in V once G
    is optimal.

    Raises:
        ConvergenceError: if tol is not reached, carrying the last iterate
    """
    if lam < 0:
        raise ParameterError(f"lambda must be >= 0, got {lam}")
    if max_sweeps < 1 or tol <= 0:
        raise ParameterError("TM needs max_sweeps >= 1 and tol > 0")
    cov, n = as_covariance(data_or_cov, n=n)
    check_n(n)
    diag_cov = np.diag(cov).copy()
    if np.any(diag_cov <= 0):
        raise DegenerateInputError("TM needs positive sample variances")
    lam_prime = 2.0 * lam / n

    v_diag, n_quasi_newton, objective_trace = _tm_profiled_ascent(
        cov, diag_cov, lam_prime, max_sweeps, tol
    )
    stationarity = np.inf
    for sweep in range(1, max_sweeps + 1):
        estimate = gstep_solve(cov, v_diag, lam_prime)
        objective_trace.append(tm_objective(estimate.sigma, v_diag, cov, lam_prime))
        stationarity = np.max(np.abs(np.diag(estimate.sigma) - diag_cov)) / np.max(diag_cov)
        L.debug(
            "TM sweep %s, objective %s, stationarity %s", sweep, objective_trace[-1], stationarity
        )
        if stationarity <= tol:
            break
        g_matrix = np.diag(v_diag) - estimate.precision
        v_diag = _v_step(v_diag, g_matrix, diag_cov)

    metadata = {
        "estimator": "tm",
        "lambda": float(lam),
        "n": int(n),
        "sweeps": n_quasi_newton + sweep,
        "quasi_newton_iterations": n_quasi_newton,
        "stationarity": float(stationarity),
        "objective_trace": objective_trace,
        "v": v_diag.tolist(),
    }
    estimate = FactorModelEstimate.from_parts(estimate.loadings, estimate.residual, metadata)
    if stationarity > tol:
        raise ConvergenceError(
            f"TM did not reach stationarity {tol} after {metadata['sweeps']} iterations",
            best=estimate,
            diagnostics={"sweeps": metadata["sweeps"], "stationarity": float(stationarity)},
        )
    return estimate


def tstep_solve(sigma, sample_cov, t0=None, tol=1e-8, max_iter=200):
    """Optimal diagonal scaling for a fixed sigma.

    Minimizes t^T C t with C = sigma^-1 o S (entrywise product) over positive t with
    sum(log t) = 0, by Newton iterations on u = log t restricted to sum(u) = 0. Stops when
    the projected gradient is below tol relative to its mean.

    Args:
        sigma (ndarray): positive definite covariance estimate
        sample_cov (ndarray): sample covariance S
        t0 (ndarray): starting point, rescaled onto the constraint
        tol (float): relative tolerance on the projected gradient
        max_iter (int): maximum number of Newton iterations

    Returns:
        ScalingMatrix: the scaling with sum(log t) = 0
    """
    precision = inverse_or_none(np.asarray(sigma, dtype=float))
    if precision is None:
        raise DegenerateInputError("T-step needs a nonsingular sigma")
    coupling = symmetrize(precision * np.asarray(sample_cov, dtype=float))
    m = len(coupling)
    scale = np.abs(coupling).max(initial=0.0)
    zero_rows = np.flatnonzero(np.all(np.abs(coupling) <= 1e-14 * max(scale, 1e-300), axis=1))
    if len(zero_rows):
        raise DegenerateInputError(f"T-step coupling matrix has zero rows {zero_rows.tolist()}")

    u = np.zeros(m) if t0 is None else np.log(np.asarray(t0, dtype=float))
    u -= np.mean(u)

    def value(u):
        t = np.exp(u)
        return t @ coupling @ t

    kkt = np.zeros((m + 1, m + 1))
    kkt[:m, m] = 1.0
    kkt[m, :m] = 1.0
    residual = np.inf
    for iteration in range(max_iter):
        t = np.exp(u)
        coupled = coupling @ t
        current = t @ coupled
        gradient = 2.0 * t * coupled
        residual = np.max(np.abs(gradient - np.mean(gradient))) / np.mean(gradient)
        if residual <= tol:
            return ScalingMatrix(diag=t, iterations=iteration)

        hessian = 2.0 * (np.outer(t, t) * coupling + np.diag(t * coupled))
        min_eig = linalg.eigvalsh(hessian)[0]
        damping = max(0.0, -min_eig) + 1e-12 * np.abs(hessian).max()
        kkt[:m, :m] = hessian + damping * np.eye(m)
        direction = linalg.solve(kkt, np.append(-gradient, 0.0))[:m]
        slope = gradient @ direction

        step = 1.0
        while value(u + step * direction) > current + 1e-4 * step * slope:
            step *= 0.5
            if step < 1e-14:
                raise ConvergenceError(
                    "T-step line search failed",
                    best=ScalingMatrix(diag=t, iterations=iteration),
                    diagnostics={"iterations": iteration, "residual": float(residual)},
                )
        u = u + step * direction
        u -= np.mean(u)

    raise ConvergenceError(
        f"T-step did not converge in {max_iter} iterations",
        best=ScalingMatrix(diag=np.exp(u), iterations=max_iter),
        diagnostics={"iterations": max_iter, "residual": float(residual)},
    )


def scaled_utm_fit(data_or_cov, lam, t, n=None):
    """UTM fitted on data scaled by T, mapped back to the original coordinates.

    Returns:
        tuple: (estimate T^-1 sigma T^-1, UtmSolution in scaled coordinates)
    """
    cov, n = as_covariance(data_or_cov, n=n)
    t = np.asarray(t, dtype=float)
    solution = utm_fit(eigh_desc(symmetrize(cov * np.outer(t, t))), lam, n=n)
    estimate = FactorModelEstimate.from_parts(
        solution.estimate.loadings / t[:, None],
        solution.estimate.residual / t**2,
        metadata=dict(solution.estimate.metadata),
    )
    return estimate, solution


def stm_objective(sample_cov, n, lam, t, solution):
    """Per-sample scaled trace-penalized objective at (T, sigma).

    Equals log p(TX|sigma) / N - (lambda / N) tr(G) with G = v_hat I - sigma^-1.
    """
    t = np.asarray(t, dtype=float)
    loglik = gaussian_loglik(solution.estimate.sigma, sample_cov * np.outer(t, t))
    if not np.isfinite(loglik):
        return -np.inf
    trace_g = np.sum(solution.v_hat - 1.0 / solution.eigenvalues)
    return loglik - lam / n * trace_g


def stm_fit(data_or_cov, lam, n=None, rel_tol=1e-3, max_sweeps=200, tstep_tol=1e-8):
    """Scaled trace-penalized estimate.

    Alternates a UTM fit on the data scaled by T with the T-step of :func:`tstep_solve`,
    starting from T = I, until max_i |T_new - T| / T < rel_tol. Returns T^-1 sigma T^-1.

    Args:
        data_or_cov (Dataset|CovMatrix|ndarray): samples or sample covariance
        lam (float): trace penalty lambda >= 0
        n (int): sample count, with a precomputed covariance
        rel_tol (float): relative tolerance on the diagonal of T
        max_sweeps (int): maximum number of sweeps
        tstep_tol (float): tolerance of the inner T-step solver

    Raises:
        ConvergenceError: if the T-step solver fails or rel_tol is not reached
    """
    if lam < 0:
        raise ParameterError(f"lambda must be >= 0, got {lam}")
    if rel_tol <= 0 or max_sweeps < 1:
        raise ParameterError("STM needs rel_tol > 0 and max_sweeps >= 1")
    cov, n = as_covariance(data_or_cov, n=n)
    check_n(n)

    t = np.ones(len(cov))
    objective_trace = []
    converged = False
    for sweep in range(1, max_sweeps + 1):
        estimate, solution = scaled_utm_fit(cov, lam, t, n=n)
        objective_trace.append(stm_objective(cov, n, lam, t, solution))
        try:
            scaling = tstep_solve(solution.estimate.sigma, cov, t0=t, tol=tstep_tol)
        except ConvergenceError as exc:
            raise ConvergenceError(
                f"T-step failed at STM sweep {sweep}",
                best=estimate,
                diagnostics={"sweep": sweep, "tstep": exc.diagnostics},
            ) from exc
        change = np.max(np.abs(scaling.diag - t) / t)
        t = scaling.diag
        L.debug("STM sweep %s, objective %s, T change %s", sweep, objective_trace[-1], change)
        if change < rel_tol:
            converged = True
            break

    estimate, solution = scaled_utm_fit(cov, lam, t, n=n)
    objective_trace.append(stm_objective(cov, n, lam, t, solution))
    metadata = {
        "estimator": "stm",
        "lambda": float(lam),
        "n": int(n),
        "sweeps": sweep,
        "converged": converged,
        "t": t.tolist(),
        "v_hat": float(solution.v_hat),
        "k_effective": solution.k_effective,
        "objective_trace": objective_trace,
    }
    estimate = FactorModelEstimate.from_parts(estimate.loadings, estimate.residual, metadata)
    if not converged:
        raise ConvergenceError(
            f"STM did not converge in {max_sweeps} sweeps",
            best=estimate,
            diagnostics={"sweeps": sweep, "change": float(change)},
        )
    return estimate
