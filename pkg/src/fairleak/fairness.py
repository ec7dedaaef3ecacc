"""Group fairness metrics, the covariance proxy, and their conversions.

Groups are encoded as an (n, K) binary membership matrix whose column k
marks the rows attributed to group k. In leak detection a row belongs to a
group exactly when a leak is active in that group, so group membership
implies a positive label and per-group positive rates coincide with
per-group true-positive rates; that structure makes disparate impact and
equal opportunity interconvertible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GroupDataError(ValueError):
    """Raised when a fairness metric is undefined for the given grouping."""


def _validate(preds, groups) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds, dtype=float)
    s = np.asarray(groups, dtype=float)
    if p.ndim != 1:
        raise GroupDataError("predictions must be a vector")
    if s.ndim != 2 or s.shape[0] != p.shape[0]:
        raise GroupDataError(
            f"group matrix shape {s.shape} does not match {p.shape[0]} predictions"
        )
    return p, s


def group_positive_rates(preds, groups) -> np.ndarray:
    """Empirical P(prediction = 1 | member of group k) for each k."""
    p, s = _validate(preds, groups)
    counts = s.sum(axis=0)
    for k, count in enumerate(counts, start=1):
        if count == 0:
            raise GroupDataError(f"group {k} has no members")
    return (s.T @ p) / counts


def disparate_impact(preds, groups) -> tuple[float, np.ndarray]:
    """Minimum pairwise ratio of group positive rates, with the rates.

    All rates zero means no group is favored over another and the score is
    defined as 1 (the constant predictor is maximally fair).
    """
    rates = group_positive_rates(preds, groups)
    max_rate = float(rates.max())
    if max_rate == 0.0:
        return 1.0, rates
    return float(rates.min()) / max_rate, rates


def true_positive_rates(preds, groups, labels) -> np.ndarray:
    """Per-group P(prediction = 1 | member of group k, label = 1)."""
    p, s = _validate(preds, groups)
    y = np.asarray(labels, dtype=float)
    if y.shape != p.shape:
        raise GroupDataError("labels must match predictions in length")
    positive = s * y[:, None]
    counts = positive.sum(axis=0)
    for k, count in enumerate(counts, start=1):
        if count == 0:
            raise GroupDataError(f"group {k} has no positive-label members")
    return (positive.T @ p) / counts


def equal_opportunity(preds, groups, labels) -> tuple[float, np.ndarray]:
    """Maximum pairwise gap of group true-positive rates, with the rates."""
    tprs = true_positive_rates(preds, groups, labels)
    return float(tprs.max() - tprs.min()), tprs


def empirical_covariance(scores, membership) -> float:
    """Sample covariance between a binary membership vector and scores.

    Accepts hard predictions or smooth scores. Exactly zero for constant
    scores.
    """
    f = np.asarray(scores, dtype=float)
    s = np.asarray(membership, dtype=float)
    if f.shape != s.shape or f.ndim != 1:
        raise GroupDataError(
            f"scores and membership must be equal-length vectors, "
            f"got {f.shape} and {s.shape}"
        )
    if f.size == 0:
        raise GroupDataError("empty vectors")
    return float(np.mean(s * f) - np.mean(s) * np.mean(f))


def eo_from_di(di: float, max_rate: float) -> float:
    """Equal-opportunity gap implied by a disparate-impact score.

    Valid when group membership implies a positive label, so rates equal
    true-positive rates.
    """
    if not 0.0 < max_rate <= 1.0:
        raise GroupDataError(f"conversion undefined for max rate {max_rate}")
    return (1.0 - di) * max_rate


def di_from_eo(eo: float, max_rate: float) -> float:
    """Disparate-impact score implied by an equal-opportunity gap."""
    if not 0.0 < max_rate <= 1.0:
        raise GroupDataError(f"conversion undefined for max rate {max_rate}")
    return 1.0 - eo / max_rate


@dataclass(frozen=True)
class FairnessReport:
    """Fairness scores of one evaluated classifier."""

    rates: tuple[float, ...]
    tprs: tuple[float, ...]
    max_rate: float
    min_rate: float
    di: float
    eo: float
    tilde_di: float
    tilde_eo: float

    def flags(self, epsilon: float) -> dict[str, bool]:
        """Whether each fairness notion holds at slack ``epsilon``."""
        return {
            "disparate_impact": self.di >= 1.0 - epsilon,
            "equal_opportunity": self.eo <= epsilon,
        }


def evaluate_fairness(preds, groups, labels) -> FairnessReport:
    """Compute all group fairness scores for hard predictions."""
    di, rates = disparate_impact(preds, groups)
    eo, tprs = equal_opportunity(preds, groups, labels)
    max_rate = float(rates.max())
    min_rate = float(rates.min())
    if max_rate > 0.0:
        tilde_di = di_from_eo(eo, max_rate)
        tilde_eo = eo_from_di(di, max_rate)
    else:
        tilde_di, tilde_eo = 1.0, 0.0
    return FairnessReport(
        rates=tuple(float(r) for r in rates),
        tprs=tuple(float(t) for t in tprs),
        max_rate=max_rate,
        min_rate=min_rate,
        di=di,
        eo=eo,
        tilde_di=tilde_di,
        tilde_eo=tilde_eo,
    )


REPORT_CSV_HEADER = "method,d,ACC,max_k,min_k,DI,EO,tilde_DI,tilde_EO"


def report_csv_row(method: str, diameter: float, acc: float, report: FairnessReport) -> str:
    """One CSV row in the :data:`REPORT_CSV_HEADER` layout."""
    values = [
        repr(float(acc)),
        repr(report.max_rate),
        repr(report.min_rate),
        repr(report.di),
        repr(report.eo),
        repr(report.tilde_di),
        repr(report.tilde_eo),
    ]
    return ",".join([method, repr(float(diameter))] + values)


@dataclass(frozen=True)
class ReferenceRow:
    """Full-scale reference scores of the threshold baseline per diameter (cm)."""

    diameter_cm: int
    acc: float
    max_rate: float
    min_rate: float
    di: float
    eo: float
    tilde_di: float
    tilde_eo: float


# Reference evaluation used by the identity suite. The 5 cm row's eo entry is
# inconsistent with max_rate - min_rate by 3e-3; tilde_eo carries the
# consistent value, and the identity suite reports both readings.
H_METHOD_REFERENCE = (
    ReferenceRow(5, 0.6223, 0.8468, 0.4880, 0.5763, 0.3558, 0.5763, 0.3588),
    ReferenceRow(10, 0.7998, 0.9983, 0.6372, 0.6383, 0.3611, 0.6383, 0.3611),
    ReferenceRow(15, 0.8837, 1.0000, 0.6402, 0.6402, 0.3598, 0.6402, 0.3598),
)
