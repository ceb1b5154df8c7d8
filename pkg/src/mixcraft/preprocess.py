"""Empirical-density preprocessing: histogram, Parzen window, k-nearest neighbour.

Every preprocessing mode reduces the raw observations to a set of support
entries (bin means or the observations themselves), each carrying a
frequency and an empirical density in data units of 1/volume.  Downstream
estimation only ever sees these entries, so the three modes share one
access surface: ``positions``, ``counts``, ``densities``, ``widths``,
``noise_counts`` and ``n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .data import Dataset, round_half_up
from .errors import (
    DegenerateRange,
    DuplicatePointsExceedK,
    EmptySelection,
    InvalidBracket,
)

HISTOGRAM = "histogram"
PARZEN = "Parzen window"
KNN = "k-nearest neighbour"
PREPROCESSING_MODES = (HISTOGRAM, PARZEN, KNN)


# ---------------------------------------------------------------------------
# bin-count and neighbour-count rules
# ---------------------------------------------------------------------------

def sturges_rule(n: int) -> int:
    """1 + log2(n), rounded half-up."""
    return max(1, round_half_up(1.0 + math.log2(n)))


def log10_rule(n: int) -> int:
    """10 * log10(n), rounded half-up, at least 1."""
    return max(1, round_half_up(10.0 * math.log10(n)))


def rootn_rule(n: int) -> int:
    """2 * sqrt(n), rounded half-up, at least 1."""
    return max(1, round_half_up(2.0 * math.sqrt(n)))


def knn_thumb(n: int) -> int:
    """sqrt(n), rounded half-up, at least 1."""
    return max(1, round_half_up(math.sqrt(n)))


def auto_grid(n: int, preprocessing: str) -> list[int]:
    """Default candidate grid: 10 geometric steps from Sturges to RootN.

    The same span serves the neighbour count for the k-nearest-neighbour
    mode, clipped to the feasible range [2, n].
    """
    lo, hi = sturges_rule(n), rootn_rule(n)
    if preprocessing == KNN:
        lo, hi = max(2, min(lo, n)), max(2, min(hi, n))
    if hi < lo:
        lo, hi = hi, lo
    raw = np.exp(np.linspace(math.log(lo), math.log(hi), 10))
    grid = sorted({max(1, round_half_up(x)) for x in raw})
    return grid


# ---------------------------------------------------------------------------
# preprocessed representations
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HistogramGrid:
    """Occupied bins of a regular grid: means, frequencies, densities."""

    positions: np.ndarray   # (m, d) bin centres
    counts: np.ndarray      # (m,) occupancy, sums to n
    densities: np.ndarray   # (m,) k_j / (n * prod(h))
    widths: np.ndarray      # (d,) bin widths in data units
    origin: np.ndarray      # (d,) lower edge of bin index 0
    indices: np.ndarray     # (m, d) integer bin multi-indices
    v: int                  # requested bins per dimension
    n: int                  # total observation count
    lower: np.ndarray       # (d,) effective minimum used for binning
    upper: np.ndarray       # (d,) effective maximum used for binning

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    @property
    def m(self) -> int:
        return self.positions.shape[0]

    # Poisson-noise scale of each density estimate is 1/sqrt(count)
    @property
    def noise_counts(self) -> np.ndarray:
        return self.counts

    @property
    def parameter(self) -> int:
        return self.v

    kind = HISTOGRAM


@dataclass(frozen=True, eq=False)
class DensityPoints:
    """Per-observation empirical densities (Parzen window or kNN)."""

    positions: np.ndarray     # (n, d) the observations themselves
    densities: np.ndarray     # (n,)
    widths: np.ndarray        # (d,) smoothing widths in data units
    kind: str                 # PARZEN or KNN
    parameter: int            # v for Parzen, k for kNN
    noise_counts: np.ndarray  # (n,) effective counts behind each density
    lower: np.ndarray         # (d,) effective minimum of the range
    upper: np.ndarray         # (d,) effective maximum of the range

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    @property
    def m(self) -> int:
        return self.positions.shape[0]

    @property
    def counts(self) -> np.ndarray:
        return np.ones(self.n, dtype=int)

    indices = None


def _effective_bounds(values: np.ndarray, ymin, ymax):
    """Observed extremes, widened to include any supplied bounds."""
    lo = values.min(axis=0)
    hi = values.max(axis=0)
    if ymin is not None:
        lo = np.minimum(lo, np.asarray(ymin, dtype=float))
    if ymax is not None:
        hi = np.maximum(hi, np.asarray(ymax, dtype=float))
    return lo.astype(float), hi.astype(float)


def build_histogram(
    data: Dataset,
    v: int,
    y0=None,
    ymin=None,
    ymax=None,
) -> HistogramGrid:
    """Bin observations on a regular grid of ``v`` bins per dimension.

    Bin widths are (max - min)/v over the effective range (observed
    extremes widened by any supplied bounds).  Intervals are half-open
    [lower, upper) with the topmost bin closed.  When origins ``y0`` are
    given, edges are anchored at y0 + integer multiples of h instead.
    """
    if v < 1:
        raise ValueError(f"bin count must be at least 1, got {v}")
    vals = data.values
    lo, hi = _effective_bounds(vals, ymin, ymax)
    span = hi - lo
    if np.any(span <= 0.0):
        bad = int(np.argmax(span <= 0.0))
        raise DegenerateRange(f"dimension {bad} has zero range [{lo[bad]}, {hi[bad]}]")
    h = span / v
    if y0 is not None:
        origin = np.asarray(y0, dtype=float) + h * np.floor((lo - np.asarray(y0, dtype=float)) / h)
    else:
        origin = lo
    idx = np.floor((vals - origin) / h).astype(int)
    # intervals are [lower, upper) except the topmost bin, which closes at
    # the effective maximum: points on that edge fold back into the last bin
    frac = (hi - origin) / h
    top = np.ceil(frac - 1e-9).astype(int) - 1
    top = np.maximum(top, 0)
    idx = np.clip(idx, 0, top)
    uniq, counts = np.unique(idx, axis=0, return_counts=True)
    centres = origin + (uniq + 0.5) * h
    dens = counts / (data.n * np.prod(h))
    return HistogramGrid(
        positions=centres,
        counts=counts.astype(int),
        densities=dens,
        widths=h,
        origin=origin,
        indices=uniq,
        v=v,
        n=data.n,
        lower=lo,
        upper=hi,
    )


def parzen_density(data: Dataset, v: int, ymin=None, ymax=None) -> DensityPoints:
    """Counting-kernel densities: occupancy of an h-sized hypercube at each point.

    h_i = (max_i - min_i)/v; a point's own contribution guarantees
    f_j >= 1/(n * prod h).  Window membership is inclusive of the boundary.
    """
    if v < 1:
        raise ValueError(f"bin count must be at least 1, got {v}")
    vals = data.values
    lo, hi = _effective_bounds(vals, ymin, ymax)
    span = hi - lo
    if np.any(span <= 0.0):
        bad = int(np.argmax(span <= 0.0))
        raise DegenerateRange(f"dimension {bad} has zero range [{lo[bad]}, {hi[bad]}]")
    h = span / v
    scaled = vals / h
    tree = cKDTree(scaled)
    counts = np.asarray(
        tree.query_ball_point(scaled, r=0.5 * (1 + 1e-12), p=np.inf, return_length=True)
    )
    dens = counts / (data.n * np.prod(h))
    return DensityPoints(
        positions=vals.copy(),
        densities=dens,
        widths=h,
        kind=PARZEN,
        parameter=v,
        noise_counts=counts.astype(int),
        lower=lo,
        upper=hi,
    )


def knn_density(data: Dataset, k: int, ymin=None, ymax=None) -> DensityPoints:
    """k-nearest-neighbour densities from per-dimension range-rescaled balls.

    Coordinates are divided by their range before distance computation;
    the d-ball volume is mapped back to data units, so densities stay
    comparable with the other preprocessing modes.  The query point itself
    counts as its own first neighbour.
    """
    if not 2 <= k <= data.n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={data.n}")
    vals = data.values
    lo, hi = _effective_bounds(vals, ymin, ymax)
    span = hi - lo
    if np.any(span <= 0.0):
        bad = int(np.argmax(span <= 0.0))
        raise DegenerateRange(f"dimension {bad} has zero range [{lo[bad]}, {hi[bad]}]")
    scaled = vals / span
    tree = cKDTree(scaled)
    dist, _ = tree.query(scaled, k=k)
    radius = dist[:, -1]
    if np.any(radius <= 0.0):
        bad = int(np.argmax(radius <= 0.0))
        raise DuplicatePointsExceedK(
            f"point {bad} has its {k}-th neighbour at distance zero"
        )
    d = data.d
    unit_ball = math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)
    volumes = unit_ball * radius**d * np.prod(span)
    dens = k / (data.n * volumes)
    # smoothing width per dimension: side of the cube holding k points
    # under uniformity, used for conditional slices at the mode
    h = span * (k / data.n) ** (1.0 / d)
    return DensityPoints(
        positions=vals.copy(),
        densities=dens,
        widths=h,
        kind=KNN,
        parameter=k,
        noise_counts=np.full(data.n, k, dtype=int),
        lower=lo,
        upper=hi,
    )


def preprocess(data: Dataset, mode: str, parameter: int, y0=None, ymin=None, ymax=None):
    """Dispatch to the named preprocessing mode."""
    if mode == HISTOGRAM:
        return build_histogram(data, parameter, y0=y0, ymin=ymin, ymax=ymax)
    if mode == PARZEN:
        return parzen_density(data, parameter, ymin=ymin, ymax=ymax)
    if mode == KNN:
        return knn_density(data, parameter, ymin=ymin, ymax=ymax)
    raise ValueError(f"unknown preprocessing {mode!r}; expected one of {PREPROCESSING_MODES}")


# ---------------------------------------------------------------------------
# global mode detection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModeInfo:
    index: int
    position: np.ndarray
    density: float
    frequency: int


def global_mode(prep, mask: np.ndarray | None = None) -> ModeInfo:
    """Entry with the highest empirical density among unmasked entries.

    Ties prefer the larger frequency, then the lowest stored index, so
    repeated runs are reproducible.
    """
    if mask is None:
        mask = np.ones(prep.m, dtype=bool)
    if not mask.any():
        raise EmptySelection("no unassigned bins or points remain")
    cand = np.flatnonzero(mask)
    dens = prep.densities[cand]
    best = dens.max()
    tied = cand[dens >= best]
    if tied.size > 1:
        freq = prep.counts[tied]
        tied = tied[freq == freq.max()]
    idx = int(tied[0])
    return ModeInfo(
        index=idx,
        position=prep.positions[idx].copy(),
        density=float(prep.densities[idx]),
        frequency=int(prep.counts[idx]),
    )


# ---------------------------------------------------------------------------
# golden-section refinement over an integer grid
# ---------------------------------------------------------------------------

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_refine(bracket, evaluate):
    """Minimise an integer-argument criterion inside a bracketing triple.

    ``bracket`` is (low, mid, high) with evaluate(mid) no worse than either
    end.  Returns (best K, best value).  Evaluations are memoised, so the
    callback runs O(log(high - low)) times and never outside [low, high].
    """
    low, mid, high = (int(b) for b in bracket)
    if not low <= mid <= high:
        raise InvalidBracket(f"bracket {bracket} is not ordered")
    cache: dict[int, float] = {}

    def ev(k: int) -> float:
        if k not in cache:
            cache[k] = float(evaluate(k))
        return cache[k]

    f_low, f_mid, f_high = ev(low), ev(mid), ev(high)
    if f_mid > f_low or f_mid > f_high:
        raise InvalidBracket(
            f"evaluate(mid)={f_mid} exceeds an endpoint ({f_low}, {f_high})"
        )
    if high - low <= 2:
        return mid, f_mid

    def probes(a: int, b: int) -> tuple[int, int]:
        x1 = min(max(round_half_up(b - _INVPHI * (b - a)), a + 1), b - 1)
        x2 = min(max(round_half_up(a + _INVPHI * (b - a)), a + 1), b - 1)
        if x1 >= x2:
            x1 = max(a + 1, x2 - 1)
            x2 = min(b - 1, x1 + 1)
        return x1, x2

    a, b = low, high
    x1, x2 = probes(a, b)
    f1, f2 = ev(x1), ev(x2)
    while b - a > 2 and x1 < x2:
        if f1 <= f2:
            b = x2
        else:
            a = x1
        if b - a <= 2:
            break
        x1, x2 = probes(a, b)
        if x1 >= x2:
            break
        f1, f2 = ev(x1), ev(x2)
    # sweep whatever remains of the final bracket (at most a couple of points)
    for k in range(a, b + 1):
        ev(k)
    best_k = min(cache, key=lambda k: (cache[k], k))
    return best_k, cache[best_k]
