"""Mixture model objects: densities, moments, sampling, random generation.

All density work happens in the log domain with a log-sum-exp reduction;
well-separated components at realistic scales push exponents far past
what linear-domain arithmetic survives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from . import linalg
from .data import Dataset, LabeledDataset, round_half_up
from .errors import DimensionMismatch, NotPositiveDefinite, ZeroDensity

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class Component:
    """One multivariate normal component: mean vector and covariance."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.shape != (mu.size, mu.size):
            raise DimensionMismatch(
                f"covariance shape {sigma.shape} does not match mean of length {mu.size}"
            )
        chol = linalg.cholesky(sigma)  # positive definiteness gate
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", (sigma + sigma.T) / 2.0)
        object.__setattr__(self, "_chol", chol)

    @property
    def d(self) -> int:
        return self.mu.size

    @property
    def chol(self) -> np.ndarray:
        return self._chol

    @property
    def log_det(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diagonal(self._chol))))


@dataclass(frozen=True, eq=False)
class MixtureModel:
    """Convex combination of normal components."""

    weights: np.ndarray
    components: tuple[Component, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        comps = tuple(self.components)
        if len(comps) != w.size or w.size < 1:
            raise DimensionMismatch("one weight per component required")
        if np.any(w <= 0.0):
            raise ValueError("component weights must be strictly positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
        dims = {c.d for c in comps}
        if len(dims) != 1:
            raise DimensionMismatch(f"components disagree on dimension: {sorted(dims)}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", comps)

    @property
    def c(self) -> int:
        return len(self.components)

    @property
    def d(self) -> int:
        return self.components[0].d


@dataclass(frozen=True, eq=False)
class MomentPair:
    """First moment, second raw moment and running weight of one component."""

    m: np.ndarray
    V: np.ndarray
    w: float


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------

def component_logpdf(comp: Component, y) -> np.ndarray | float:
    """Log normal density at one point (d,) or many points (m, d)."""
    pts = np.asarray(y, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != comp.d:
        raise DimensionMismatch(f"points of dimension {pts.shape[1]}, component is {comp.d}")
    z = solve_triangular(comp.chol, (pts - comp.mu).T, lower=True)
    quad = np.sum(z * z, axis=0)
    out = -0.5 * (comp.d * LOG_2PI + comp.log_det + quad)
    return float(out[0]) if single else out


def component_pdf(comp: Component, y):
    """Normal density value(s) at ``y``."""
    return np.exp(component_logpdf(comp, y))


def _component_log_matrix(model: MixtureModel, pts: np.ndarray) -> np.ndarray:
    """(m, c) matrix of log w_l + log f(y_j | component l)."""
    logs = np.empty((pts.shape[0], model.c))
    logw = np.log(model.weights)
    for l, comp in enumerate(model.components):
        logs[:, l] = logw[l] + component_logpdf(comp, pts)
    return logs


def mixture_logpdf(model: MixtureModel, y) -> np.ndarray | float:
    """Log mixture density at one point or many points."""
    pts = np.asarray(y, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    out = logsumexp(_component_log_matrix(model, pts), axis=1)
    return float(out[0]) if single else out


def mixture_pdf(model: MixtureModel, y):
    """Mixture density value(s) at ``y``."""
    return np.exp(mixture_logpdf(model, y))


def posterior_tau(model: MixtureModel, y) -> np.ndarray:
    """Component responsibilities at one point (c,) or many points (m, c)."""
    pts = np.asarray(y, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    logs = _component_log_matrix(model, pts)
    total = logsumexp(logs, axis=1, keepdims=True)
    if not np.all(np.isfinite(total)):
        bad = int(np.argmax(~np.isfinite(total[:, 0])))
        raise ZeroDensity(f"mixture density underflowed at point {bad}", index=bad)
    tau = np.exp(logs - total)
    return tau[0] if single else tau


def log_likelihood(model: MixtureModel, prep) -> float:
    """Frequency-weighted log likelihood over a preprocessed set or raw data.

    Histograms weight each bin's log density by its occupancy; point-based
    preprocessing and raw datasets weight every row once.
    """
    if isinstance(prep, Dataset):
        pts, counts = prep.values, np.ones(prep.n)
    else:
        pts, counts = prep.positions, prep.counts
    logs = mixture_logpdf(model, pts)
    logs = np.atleast_1d(logs)
    if not np.all(np.isfinite(logs)):
        bad = int(np.argmax(~np.isfinite(logs)))
        raise ZeroDensity(f"mixture density underflowed at entry {bad}", index=bad)
    return float(np.sum(counts * logs))


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------

def moments_from_component(comp: Component, w: float) -> MomentPair:
    """First moment and second raw moment: m = mu, V = Sigma + mu mu^T."""
    return MomentPair(
        m=comp.mu.copy(),
        V=comp.sigma + np.outer(comp.mu, comp.mu),
        w=float(w),
    )


def component_from_moments(mp: MomentPair) -> Component:
    """Invert the moment map; fails if V - m m^T has collapsed."""
    sigma = mp.V - np.outer(mp.m, mp.m)
    return Component(mu=mp.m.copy(), sigma=sigma)


# ---------------------------------------------------------------------------
# sampling and random model generation
# ---------------------------------------------------------------------------

def sample(
    model: MixtureModel,
    n_per_component,
    rng: np.random.Generator,
    name: str = "sample",
) -> LabeledDataset:
    """Draw ``n_l`` rows from each component; labels record the source (1-based)."""
    counts = [int(x) for x in np.atleast_1d(n_per_component)]
    if len(counts) != model.c:
        raise DimensionMismatch(f"need {model.c} counts, got {len(counts)}")
    if any(x < 0 for x in counts):
        raise ValueError("per-component counts must be non-negative")
    blocks, labels = [], []
    for l, (comp, n_l) in enumerate(zip(model.components, counts)):
        if n_l == 0:
            continue
        z = rng.standard_normal((n_l, comp.d))
        blocks.append(comp.mu + z @ comp.chol.T)
        labels.append(np.full(n_l, l + 1, dtype=int))
    if not blocks:
        raise ValueError("at least one component must receive a positive count")
    values = np.concatenate(blocks, axis=0)
    labs = np.concatenate(labels)
    # relabel in case zero-count components left gaps in 1..s
    uniq = np.unique(labs)
    remap = {int(u): i + 1 for i, u in enumerate(uniq)}
    labs = np.array([remap[int(x)] for x in labs], dtype=int)
    return LabeledDataset(Dataset(values, name=name), labs)


@dataclass(frozen=True)
class GeneratorSpec:
    """Recipe for a random mixture: dimensions, ranges and a seed."""

    d: int
    c: int
    n: int
    mu_range: tuple[float, float]
    lambda_range: tuple[float, float]
    seed: int

    def __post_init__(self):
        if self.d < 1 or self.c < 1 or self.n < 1:
            raise ValueError("d, c and n must all be at least 1")
        if not self.mu_range[0] <= self.mu_range[1]:
            raise ValueError("mu_range must be ordered")
        if not 0.0 < self.lambda_range[0] <= self.lambda_range[1]:
            raise ValueError("lambda_range must be positive and ordered")


def generate_random_model(spec: GeneratorSpec, rng: np.random.Generator | None = None):
    """Random mixture: uniform weights renormalised, uniform means, and
    covariances P diag(lambda) P^T with a random orthonormal frame P.

    Returns the model and the per-component row counts
    round-half-up(w_l * n).
    """
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(spec.seed))
    w = rng.uniform(0.1, 0.9, size=spec.c)
    w = w / w.sum()
    comps = []
    for _ in range(spec.c):
        mu = rng.uniform(spec.mu_range[0], spec.mu_range[1], size=spec.d)
        lam = rng.uniform(spec.lambda_range[0], spec.lambda_range[1], size=spec.d)
        frame = linalg.random_orthonormal(spec.d, rng)
        sigma = frame @ np.diag(lam) @ frame.T
        comps.append(Component(mu=mu, sigma=(sigma + sigma.T) / 2.0))
    n_per = [round_half_up(wl * spec.n) for wl in w]
    return MixtureModel(weights=w, components=tuple(comps)), n_per


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def model_to_dict(model: MixtureModel) -> dict:
    """JSON-shaped document: {d, c, w[], components[{mu[], sigma[row-major]}]}."""
    return {
        "d": model.d,
        "c": model.c,
        "w": [float(x) for x in model.weights],
        "components": [
            {
                "mu": [float(x) for x in comp.mu],
                "sigma": [float(x) for x in comp.sigma.reshape(-1)],
            }
            for comp in model.components
        ],
    }


def model_from_dict(doc: dict) -> MixtureModel:
    """Rebuild a model from its JSON-shaped document."""
    d = int(doc["d"])
    comps = []
    for entry in doc["components"]:
        mu = np.asarray(entry["mu"], dtype=float)
        sigma = np.asarray(entry["sigma"], dtype=float).reshape(d, d)
        comps.append(Component(mu=mu, sigma=sigma))
    return MixtureModel(weights=np.asarray(doc["w"], dtype=float), components=tuple(comps))
