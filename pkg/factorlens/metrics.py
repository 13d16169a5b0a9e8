"""Aggregates with confidence intervals and the equivalent data requirement."""
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .exceptions import ParameterError

L = logging.getLogger(__name__)

Z_95 = 1.96


def aggregate(scores):
    """Return (mean, half-width of the normal 95% confidence interval).

    The half-width is 1.96 std / sqrt(n), with the population standard deviation.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.size < 2:
        raise ParameterError(f"Need at least 2 scores to aggregate, got {scores.size}")
    return float(np.mean(scores)), float(Z_95 * np.std(scores) / np.sqrt(scores.size))


def paired_difference(first, second):
    """Aggregate of the per-replication differences first - second."""
    first = np.asarray(first, dtype=float)
    second = np.asarray(second, dtype=float)
    if first.shape != second.shape:
        raise ParameterError("Paired scores must have the same length")
    return aggregate(first - second)


@dataclass
class ExperimentReport:
    """Per-replication scores with their aggregate and selected parameters."""

    per_replication: list
    mean: float
    ci95: float
    selected_params: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_scores(cls, scores, selected_params=None, metadata=None):
        """Report with aggregates computed from scores, ci95 is 0 for a single score."""
        scores = [float(score) for score in scores]
        if len(scores) >= 2:
            mean, ci95 = aggregate(scores)
        else:
            mean, ci95 = float(np.mean(scores)), 0.0
        return cls(scores, mean, ci95, list(selected_params or []), dict(metadata or {}))

    def to_frame(self):
        """One row per replication."""
        frame = pd.DataFrame({"replication": range(len(self.per_replication))})
        frame["score"] = self.per_replication
        if len(self.selected_params) == len(self.per_replication):
            frame["theta"] = self.selected_params
        return frame

    def to_dict(self):
        """JSON-friendly representation."""
        return {
            "per_replication": self.per_replication,
            "mean": self.mean,
            "ci95": self.ci95,
            "selected_params": self.selected_params,
            "metadata": self.metadata,
        }


@dataclass(frozen=True)
class EdrResult:
    """Equivalent data requirement gamma.

    ``u2_worse`` flags the case where the second learner is already worse on the full data,
    ``floor`` the case where no prefix made it worse.
    """

    gamma: float
    u2_worse: bool = False
    floor: bool = False
    steps: int = 0
    scores: list = field(default_factory=list)


def equivalent_data_requirement(u1, u2, data, alpha, evaluator):
    """Fraction of the data the learner u2 needs to match u1 trained on all of it.

    Prefixes of size round(gamma N), gamma = 1 - i alpha, are tried for i = 0, 1, ... until
    u2 scores below u1 on the full data; gamma is then linearly interpolated between the last
    two prefixes.

    Args:
        u1 (callable): baseline learner
        u2 (callable): learner expected to be better
        data (Dataset): ordered samples
        alpha (float): step size in (0, 1)
        evaluator (callable): evaluator(learner, dataset) -> out-of-sample score

    Returns:
        EdrResult: gamma in (0, 1]
    """
    if not 0 < alpha < 1:
        raise ParameterError(f"alpha must be in (0, 1), got {alpha}")
    target = evaluator(u1, data)
    previous = None
    scores = []
    i = 0
    while True:
        gamma = 1.0 - i * alpha
        if gamma <= 1e-12:
            L.warning("u2 matches u1 with every prefix, returning gamma=%s", alpha)
            return EdrResult(gamma=alpha, floor=True, steps=i, scores=scores)
        n_rows = max(1, int(round(gamma * data.n)))
        score = evaluator(u2, data.prefix(n_rows))
        if not np.isfinite(score):
            score = -np.inf
        scores.append(score)
        if score < target:
            if i == 0:
                L.warning("u2 scores below u1 on the full data")
                return EdrResult(gamma=1.0, u2_worse=True, steps=i, scores=scores)
            if np.isfinite(score):
                gamma += (target - score) / (previous - score) * alpha
            else:
                gamma += alpha
            return EdrResult(gamma=float(gamma), steps=i, scores=scores)
        previous = score
        i += 1


def summarize(frame, by, value="score"):
    """Mean and ci95 of ``value`` per group, with log2(n / m) when n and m are grouped."""
    rows = []
    for keys, group in frame.groupby(list(by), sort=True):
        keys = keys if isinstance(keys, tuple) else (keys,)
        scores = group[value].to_numpy(dtype=float)
        finite = scores[np.isfinite(scores)]
        if len(finite) >= 2:
            mean, ci95 = aggregate(finite)
        else:
            mean, ci95 = (float(finite[0]) if len(finite) else -np.inf), 0.0
        row = dict(zip(by, keys))
        row.update({"mean": mean, "ci95": ci95, "count": len(scores), "n_finite": len(finite)})
        rows.append(row)
    summary = pd.DataFrame(rows)
    if "n" in summary and "m" in summary:
        summary["log2_n_over_m"] = np.log2(summary["n"] / summary["m"])
    return summary
