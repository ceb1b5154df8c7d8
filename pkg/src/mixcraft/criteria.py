"""Model-selection criteria, degrees of freedom, and fit statistics.

All criteria are minimised.  The partition coefficient is returned negated
so the whole family shares one orientation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import InsufficientN
from .model import MixtureModel, mixture_logpdf, posterior_tau


@dataclass(frozen=True)
class FitStatistics:
    """Everything a criterion can ask about one fitted mixture."""

    logL: float
    M: int           # free parameter count
    n: int           # observation count
    entropy: float   # soft-assignment entropy, >= 0
    D: float         # total positive relative deviation, in [0, 1]
    SSE: float
    PC_raw: float    # mean squared responsibility, in (0, 1]


def degrees_of_freedom(c: int, d: int) -> int:
    """Free parameters of a c-component mixture with unrestricted covariances.

    c - 1 weights plus, per component, d mean entries and d(d+1)/2
    covariance entries.
    """
    if c < 1 or d < 1:
        raise ValueError("component count and dimension must be at least 1")
    return (c - 1) + c * (d + d * (d + 1) // 2)


def _aicc(stats: FitStatistics) -> float:
    if stats.n <= stats.M + 1:
        raise InsufficientN(f"AICc needs n > M + 1, got n={stats.n}, M={stats.M}")
    return -2.0 * stats.logL + 2.0 * stats.M * stats.n / (stats.n - stats.M - 1)


_FORMULAS = {
    "AIC": lambda s: -2.0 * s.logL + 2.0 * s.M,
    "AIC3": lambda s: -2.0 * s.logL + 3.0 * s.M,
    "AIC4": lambda s: -2.0 * s.logL + 4.0 * s.M,
    "AICc": _aicc,
    "BIC": lambda s: -2.0 * s.logL + s.M * math.log(s.n),
    "CAIC": lambda s: -2.0 * s.logL + s.M * (math.log(s.n) + 1.0),
    "HQC": lambda s: -2.0 * s.logL + 2.0 * s.M * math.log(math.log(s.n)),
    "MDL2": lambda s: -2.0 * s.logL + 2.0 * s.M * math.log(s.n),
    "MDL5": lambda s: -2.0 * s.logL + 5.0 * s.M * math.log(s.n),
    "AWE": lambda s: -2.0 * (s.logL - s.entropy) + 2.0 * s.M * (1.5 + math.log(s.n)),
    "CLC": lambda s: -2.0 * s.logL + 2.0 * s.entropy,
    "ICL": lambda s: -2.0 * s.logL + s.M * math.log(s.n) + 2.0 * s.entropy,
    "ICL-BIC": lambda s: -2.0 * s.logL + s.M * math.log(s.n) + 2.0 * s.entropy,
    "PC": lambda s: -s.PC_raw,
    "D": lambda s: s.D,
    "SSE": lambda s: s.SSE,
}

CRITERIA = tuple(_FORMULAS)


def evaluate_criterion(kind: str, stats: FitStatistics) -> float:
    """Scalar value of the named criterion; lower is better for every kind."""
    try:
        formula = _FORMULAS[kind]
    except KeyError:
        raise ValueError(f"unknown criterion {kind!r}; expected one of {CRITERIA}") from None
    return float(formula(stats))


def _weighted_tau(model: MixtureModel, prep):
    if isinstance(prep, Dataset):
        pts, counts = prep.values, np.ones(prep.n)
    else:
        pts, counts = prep.positions, prep.counts
    tau = posterior_tau(model, pts)
    return np.atleast_2d(tau), counts


def assignment_entropy(model: MixtureModel, prep) -> float:
    """Frequency-weighted entropy of the responsibilities; zero when hard."""
    tau, counts = _weighted_tau(model, prep)
    safe = np.where(tau > 0.0, tau, 1.0)
    per_point = -np.sum(tau * np.log(safe), axis=1)
    return float(np.sum(counts * per_point))


def partition_coefficient(model: MixtureModel, prep) -> float:
    """Mean squared responsibility (1/n) sum_j k_j sum_l tau_jl^2."""
    tau, counts = _weighted_tau(model, prep)
    n = counts.sum()
    return float(np.sum(counts * np.sum(tau * tau, axis=1)) / n)


def total_positive_relative_deviation(predicted, prep) -> float:
    """Empirical mass the predictive density fails to cover, in [0, 1].

    ``predicted`` is a MixtureModel or a precomputed density vector aligned
    with the preprocessed entries.
    """
    f = prep.densities
    counts = prep.counts
    fhat = _predicted_densities(predicted, prep)
    n = counts.sum()
    excess = np.clip((f - fhat) / f, 0.0, None)
    return float(np.sum(excess * counts) / n)


def sse(predicted, prep) -> float:
    """Frequency-weighted sum of squared density residuals."""
    f = prep.densities
    counts = prep.counts
    fhat = _predicted_densities(predicted, prep)
    return float(np.sum(counts * (f - fhat) ** 2))


def _predicted_densities(predicted, prep) -> np.ndarray:
    if isinstance(predicted, MixtureModel):
        return np.exp(np.atleast_1d(mixture_logpdf(predicted, prep.positions)))
    return np.asarray(predicted, dtype=float)


def compute_statistics(model: MixtureModel, prep) -> FitStatistics:
    """Assemble the full statistics record for one fitted mixture."""
    from .model import log_likelihood  # local import keeps module load light

    if isinstance(prep, Dataset):
        raise ValueError("fit statistics need a preprocessed density structure")
    logl = log_likelihood(model, prep)
    return FitStatistics(
        logL=logl,
        M=degrees_of_freedom(model.c, model.d),
        n=int(prep.counts.sum()),
        entropy=assignment_entropy(model, prep),
        D=total_positive_relative_deviation(model, prep),
        SSE=sse(model, prep),
        PC_raw=partition_coefficient(model, prep),
    )
