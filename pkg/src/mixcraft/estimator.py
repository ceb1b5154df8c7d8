"""Sequential mixture estimation: peel components at global modes, refine
by maximum likelihood, sweep the residue in by the Bayes rule, and select
component count and smoothing parameter by an information criterion.

The pipeline per smoothing parameter K is:

1. Repeatedly take the highest-density unassigned entry as a candidate
   component centre, shape the component from conditional densities at
   that mode plus the support's correlation structure, and search the
   component weight by trimming the worst-covered entries until the total
   positive relative deviation stops improving (``rough`` stage).
2. Re-estimate each peeled component by weighted maximum likelihood over
   its attributed entries (``enhanced`` stage).
3. Classify every unattributed entry to a component with the Bayes rule,
   updating weights and moments incrementally, then invert the moments
   back to component parameters.
4. Score each candidate component count with the requested criterion and
   keep the best; an outer loop does the same across K with golden-section
   refinement around the grid minimum.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import linalg
from .criteria import CRITERIA, FitStatistics, compute_statistics, evaluate_criterion
from .data import Dataset
from .errors import (
    EmptySelection,
    InsufficientSupport,
    MixtureError,
    NotPositiveDefinite,
    SingularConditional,
)
from .model import (
    Component,
    MixtureModel,
    MomentPair,
    component_from_moments,
    component_logpdf,
    moments_from_component,
)
from .preprocess import (
    HISTOGRAM,
    KNN,
    PARZEN,
    PREPROCESSING_MODES,
    ModeInfo,
    auto_grid,
    global_mode,
    golden_section_refine,
    preprocess,
)

LOG_2PI = math.log(2.0 * math.pi)

# Attribution tolerates density noise of a few Poisson standard errors so
# single up-fluctuating bins stay with the component that explains them.
_SLACK_SIGMAS = 2.0
_SLACK_CAP = 0.9
_MAX_INNER = 1000
_D_TOL = 1e-12


@dataclass
class EstimatorConfig:
    """Everything the estimator needs besides the data itself."""

    preprocessing: str = HISTOGRAM
    cmax: int = 15
    criterion: str = "AIC"
    k_grid: object = "auto"        # "auto" or an ascending sequence of ints
    y0: object = None
    ymin: object = None
    ymax: object = None
    ar: float = 0.1
    restraints: str = "loose"

    def __post_init__(self):
        if self.preprocessing not in PREPROCESSING_MODES:
            raise ValueError(
                f"unknown preprocessing {self.preprocessing!r}; expected one of {PREPROCESSING_MODES}"
            )
        if self.cmax < 1:
            raise ValueError("cmax must be at least 1")
        if self.criterion not in CRITERIA:
            raise ValueError(f"unknown criterion {self.criterion!r}; expected one of {CRITERIA}")
        if not 0.0 < self.ar <= 1.0:
            raise ValueError(f"acceleration rate must lie in (0, 1], got {self.ar}")
        if self.restraints not in ("rigid", "loose"):
            raise ValueError(f"restraints must be 'rigid' or 'loose', got {self.restraints!r}")
        if not (isinstance(self.k_grid, str) and self.k_grid == "auto"):
            grid = [int(k) for k in self.k_grid]
            if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
                raise ValueError("k_grid must be a strictly ascending sequence of positive ints")
            self.k_grid = grid


@dataclass(frozen=True, eq=False)
class RoughComponent:
    """Mode-pinned component candidate plus its attributed entries."""

    mu: np.ndarray
    sigma: np.ndarray
    weight: float
    support: np.ndarray  # boolean mask over the preprocessed entries

    def as_component(self) -> Component:
        return Component(mu=self.mu, sigma=self.sigma)


@dataclass(frozen=True, eq=False)
class FitResult:
    """Selected model plus the per-candidate diagnostics behind the choice."""

    model: MixtureModel
    summary: dict
    stats: FitStatistics
    opt_c: list[int]
    opt_ic: list[float]
    opt_logl: list[float]
    opt_d: list[float]
    all_k: list[int]
    all_ic: list[float]


# ---------------------------------------------------------------------------
# rough estimation
# ---------------------------------------------------------------------------

def _conditional_sigmas(prep, mode: ModeInfo, candidate: np.ndarray) -> np.ndarray:
    """Per-dimension scales from the empirical conditional density through
    the mode: sigma_i = 1 / (sqrt(2 pi) f_i), where f_i is the 1-D density
    at the mode of the slice holding every other coordinate fixed."""
    d = prep.d
    h = prep.widths
    sigmas = np.empty(d)
    if prep.kind == HISTOGRAM:
        mode_idx = prep.indices[mode.index]
        k_mode = prep.counts[mode.index]
        for i in range(d):
            others = [j for j in range(d) if j != i]
            if others:
                match = candidate & np.all(prep.indices[:, others] == mode_idx[others], axis=1)
            else:
                match = candidate
            slice_mass = prep.counts[match].sum()
            if slice_mass <= 0:
                raise SingularConditional(f"empty conditional slice along dimension {i}")
            cond = k_mode / (slice_mass * h[i])
            sigmas[i] = 1.0 / (math.sqrt(2.0 * math.pi) * cond)
    else:
        pos = prep.positions
        offs = np.abs(pos - mode.position)
        for i in range(d):
            others = [j for j in range(d) if j != i]
            slab = candidate.copy()
            for j in others:
                slab &= offs[:, j] <= h[j] / 2.0
            n_slab = int(slab.sum())
            if n_slab <= 0:
                raise SingularConditional(f"empty conditional slab along dimension {i}")
            local = int(np.sum(slab & (offs[:, i] <= h[i] / 2.0)))
            cond = local / (n_slab * h[i])
            sigmas[i] = 1.0 / (math.sqrt(2.0 * math.pi) * cond)
    return sigmas


def _support_correlation(prep, mode: ModeInfo, support: np.ndarray) -> np.ndarray:
    """Correlation of the support's scatter about the mode; identity when
    the scatter is degenerate."""
    d = prep.d
    if d == 1:
        return np.ones((1, 1))
    pts = prep.positions[support]
    k = prep.counts[support].astype(float)
    total = k.sum()
    if total <= 0 or pts.shape[0] < 2:
        return np.eye(d)
    diff = pts - mode.position
    cov = (diff * k[:, None]).T @ diff / total
    diag = np.diagonal(cov)
    if np.any(diag <= 0.0):
        return np.eye(d)
    s = np.sqrt(diag)
    corr = cov / np.outer(s, s)
    corr = np.clip((corr + corr.T) / 2.0, -0.999, 0.999)
    np.fill_diagonal(corr, 1.0)
    return corr


def _invert_correlation(corr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of a correlation matrix, ridged toward identity if needed."""
    for lam in (0.0, 1e-8, 1e-4, 1e-2, 1e-1, 0.5):
        ridged = (corr + lam * np.eye(corr.shape[0])) / (1.0 + lam)
        np.fill_diagonal(ridged, 1.0)
        try:
            return linalg.inverse(ridged), ridged
        except NotPositiveDefinite:
            continue
    eye = np.eye(corr.shape[0])
    return eye, eye


def _assemble_covariance(sigmas: np.ndarray, corr: np.ndarray, f_lm: float) -> np.ndarray:
    """Combine mode-conditional scales with the support correlation, then
    inflate so the density at the mode cannot exceed the empirical one."""
    d = sigmas.size
    g, corr = _invert_correlation(corr)
    diag = np.diagonal(g) * sigmas**2
    s = np.sqrt(diag)
    cov = corr * np.outer(s, s)
    np.fill_diagonal(cov, diag)
    det = linalg.determinant(cov)
    eps = max(1.0, (f_lm * math.sqrt((2.0 * math.pi) ** d * det)) ** (-2.0 / d))
    return cov * eps


def rough_estimate(
    prep,
    mode: ModeInfo,
    weight_share: float,
    candidate: np.ndarray | None = None,
    support: np.ndarray | None = None,
) -> RoughComponent:
    """Closed-form component pinned at the global mode.

    ``candidate`` masks the entries still unassigned (conditional slices are
    taken there); ``support`` masks the entries currently attributed to the
    component (correlation structure).  The density at the mode never
    exceeds mode.density / weight_share.
    """
    if not 0.0 < weight_share <= 1.0:
        raise ValueError(f"weight share must lie in (0, 1], got {weight_share}")
    if candidate is None:
        candidate = np.ones(prep.m, dtype=bool)
    if support is None:
        support = candidate
    if not candidate[mode.index]:
        raise EmptySelection("mode is not among the candidate entries")
    sigmas = _conditional_sigmas(prep, mode, candidate)
    corr = _support_correlation(prep, mode, support)
    f_lm = mode.density / weight_share
    cov = _assemble_covariance(sigmas, corr, f_lm)
    weight = float(prep.counts[support].sum() / prep.counts.sum())
    return RoughComponent(mu=mode.position.copy(), sigma=cov, weight=weight, support=support.copy())


# ---------------------------------------------------------------------------
# component peeling (loop 1)
# ---------------------------------------------------------------------------

@dataclass
class _PeelRecord:
    component: RoughComponent
    w_res_before: float
    enhanced: Component | None = None


def _extract_component(prep, unassigned: np.ndarray, ar: float) -> RoughComponent:
    """One pass of the two-cluster split: shape a component at the residue's
    global mode, then trim the worst-covered entries in ar-sized bites while
    the total positive relative deviation keeps falling."""
    mode = global_mode(prep, unassigned)
    cand_idx = np.flatnonzero(unassigned)
    pos = prep.positions[cand_idx]
    f = prep.densities[cand_idx]
    k = prep.counts[cand_idx].astype(float)
    n = float(prep.counts.sum())
    mode_local = int(np.searchsorted(cand_idx, mode.index))

    sigmas = _conditional_sigmas(prep, mode, unassigned)

    keep = np.ones(cand_idx.size, dtype=bool)
    w = float(k.sum() / n)
    best = None
    d_prev = np.inf
    for _ in range(_MAX_INNER):
        support_global = np.zeros(prep.m, dtype=bool)
        support_global[cand_idx[keep]] = True
        corr = _support_correlation(prep, mode, support_global)
        cov = _assemble_covariance(sigmas, corr, mode.density / w)
        comp = Component(mu=mode.position, sigma=cov)
        pdf = np.exp(component_logpdf(comp, pos))
        excess = 1.0 - w * pdf / f
        dev = float(np.sum(k[keep & (excess > 0.0)] * excess[keep & (excess > 0.0)]) / n)
        if dev < d_prev - _D_TOL:
            best = (comp, w, pdf)
            d_prev = dev
        else:
            break
        positive = keep & (excess > 0.0)
        positive[mode_local] = False
        pos_idx = np.flatnonzero(positive)
        if pos_idx.size == 0:
            break
        order = pos_idx[np.argsort(-excess[pos_idx], kind="stable")]
        target = ar * float(k[order].sum())
        cum = np.cumsum(k[order])
        cut = int(np.searchsorted(cum, target, side="left")) + 1
        keep[order[:cut]] = False
        w = float(k[keep].sum() / n)
        if w <= 0.0:
            break

    comp, w, pdf = best
    slack = np.minimum(_SLACK_CAP, _SLACK_SIGMAS / np.sqrt(prep.noise_counts[cand_idx]))
    covered = w * pdf >= f * (1.0 - slack)
    covered[mode_local] = True
    support = np.zeros(prep.m, dtype=bool)
    support[cand_idx[covered]] = True
    weight = float(prep.counts[support].sum() / n)
    return RoughComponent(mu=comp.mu, sigma=comp.sigma, weight=weight, support=support)


def _component_cap(prep, config: EstimatorConfig) -> int:
    return max(1, min(config.cmax, prep.parameter, prep.m))


def _peel_sequence(prep, config: EstimatorConfig, cap: int) -> list[_PeelRecord]:
    """Greedy peel up to ``cap`` components, recording the residual weight
    seen before each extraction.  The sequence is nested: any stopping rule
    truncates it to a prefix without changing the components themselves."""
    records: list[_PeelRecord] = []
    unassigned = np.ones(prep.m, dtype=bool)
    n = float(prep.counts.sum())
    while len(records) < cap and unassigned.any():
        w_res = float(prep.counts[unassigned].sum() / n)
        if w_res <= 0.0:
            break
        comp = _extract_component(prep, unassigned, config.ar)
        records.append(_PeelRecord(component=comp, w_res_before=w_res))
        unassigned &= ~comp.support
    return records


def _prefix_length(records: list[_PeelRecord], d_min: float, cap: int) -> int:
    """How many peeled components survive the residual-weight stopping rule
    w_res <= d_min * (l - 1) and the hard cap."""
    length = 0
    for rec in records:
        l = length + 1
        if l > cap:
            break
        if length >= 1 and rec.w_res_before <= d_min * length:
            break
        length = l
    return length


def peel_components(prep, d_min: float, config: EstimatorConfig | None = None):
    """Split the data into mode-pinned components until the residue is light.

    New components stop once the unassigned weight drops to
    ``d_min * (components so far)`` or a hard cap (cmax, the smoothing
    parameter, or the entry count) is hit.  Returns the components and the
    residual unassigned weight.
    """
    if not 0.0 < d_min <= 1.0:
        raise ValueError(f"d_min must lie in (0, 1], got {d_min}")
    if config is None:
        config = EstimatorConfig()
    cap = _component_cap(prep, config)
    records = _peel_sequence(prep, config, cap)
    if not records:
        raise EmptySelection("no entries available for peeling")
    length = max(1, _prefix_length(records, d_min, cap))
    comps = [rec.component for rec in records[:length]]
    unassigned = np.ones(prep.m, dtype=bool)
    for comp in comps:
        unassigned &= ~comp.support
    residual = float(prep.counts[unassigned].sum() / prep.counts.sum())
    return comps, residual


# ---------------------------------------------------------------------------
# enhanced estimation (maximum likelihood over the attributed support)
# ---------------------------------------------------------------------------

def enhanced_estimate(comp: RoughComponent, prep, restraints: str = "loose") -> Component:
    """Weighted ML refinement over the component's attributed entries.

    Loose restraints accept the ML covariance whenever it is positive
    definite and otherwise keep the rough parameters; rigid restraints only
    refine the mean.
    """
    support = comp.support
    k = prep.counts[support].astype(float)
    n_l = k.sum()
    if n_l < prep.d + 1:
        raise InsufficientSupport(
            f"support holds frequency {n_l:.0f}, need at least {prep.d + 1}"
        )
    pts = prep.positions[support]
    mu = (k[:, None] * pts).sum(axis=0) / n_l
    diff = pts - mu
    cov = (diff * k[:, None]).T @ diff / n_l
    if restraints == "rigid":
        return Component(mu=mu, sigma=comp.sigma)
    try:
        return Component(mu=mu, sigma=cov)
    except NotPositiveDefinite:
        return comp.as_component()


def _enhance_or_keep(comp: RoughComponent, prep, restraints: str) -> Component:
    try:
        return enhanced_estimate(comp, prep, restraints)
    except (InsufficientSupport, NotPositiveDefinite):
        return comp.as_component()


# ---------------------------------------------------------------------------
# Bayes classification of the residue
# ---------------------------------------------------------------------------

def bayes_assign(weighted_components, prep, unassigned: np.ndarray | None = None) -> MixtureModel:
    """Assign every unattributed entry to the best component by the Bayes
    rule, updating weights and the running first/second moments entry by
    entry, then invert the moments back into component parameters.

    ``weighted_components`` pairs each Component with its attributed weight;
    those weights plus the unassigned mass must account for all the data.
    """
    comps = [c for _, c in weighted_components]
    w = np.array([float(wl) for wl, _ in weighted_components])
    if len(comps) < 1:
        raise ValueError("at least one component required")
    if unassigned is None:
        unassigned = np.zeros(prep.m, dtype=bool)
    n = float(prep.counts.sum())
    residual = float(prep.counts[unassigned].sum() / n)
    if abs(w.sum() + residual - 1.0) > 1e-9:
        raise ValueError(
            f"component weights ({w.sum():.12f}) plus residual mass ({residual:.12f}) must equal 1"
        )
    moments = [moments_from_component(c, wl) for wl, c in zip(w, comps)]
    m = np.stack([mp.m for mp in moments])
    V = np.stack([mp.V for mp in moments])

    idx = np.flatnonzero(unassigned)
    if idx.size:
        pts = prep.positions[idx]
        counts = prep.counts[idx].astype(float)
        # component parameters stay fixed during the pass; only the weights
        # evolve inside the decision rule
        logpdf = np.stack([component_logpdf(c, pts) for c in comps], axis=1)
        for j in range(idx.size):
            scores = np.log(w) + logpdf[j]
            l = int(np.argmax(scores))
            kj = counts[j]
            y = pts[j]
            w[l] += kj / n
            m[l] += kj * (y - m[l]) / (n * w[l])
            V[l] += kj * (np.outer(y, y) - V[l]) / (n * w[l])

    out = []
    for l in range(len(comps)):
        try:
            out.append(component_from_moments(MomentPair(m=m[l], V=V[l], w=float(w[l]))))
        except NotPositiveDefinite as exc:
            raise NotPositiveDefinite(
                f"component {l} collapsed during Bayes assignment", component=l
            ) from exc
    w = w / w.sum()
    return MixtureModel(weights=w, components=tuple(out))


# ---------------------------------------------------------------------------
# candidate sweep for one smoothing parameter (loops 2-3)
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FixedKResult:
    model: MixtureModel | None
    stats: FitStatistics | None
    ic: float
    rows: list[tuple[int, float, float, float]]  # (c, IC, logL, D)
    prep: object


def fit_fixed_k(prep, config: EstimatorConfig) -> FixedKResult:
    """Best mixture for one smoothing parameter.

    Sweeps candidate component counts 1..cap; the residual-weight stopping
    rule uses d_min = 1 / c_target^2 so a target of c components is actually
    reachable before the rule bites.  Failed candidates score +inf and are
    skipped.
    """
    cap = _component_cap(prep, config)
    records = _peel_sequence(prep, config, cap)
    if not records:
        raise EmptySelection("nothing to fit: no occupied entries")

    unassigned_after: list[np.ndarray] = []
    mask = np.ones(prep.m, dtype=bool)
    for rec in records:
        mask = mask & ~rec.component.support
        unassigned_after.append(mask.copy())

    rows: list[tuple[int, float, float, float]] = []
    seen: set[int] = set()
    best = None
    for c_target in range(1, cap + 1):
        d_min = 1.0 / (c_target * c_target)
        length = _prefix_length(records, d_min, c_target)
        if length == 0 or length in seen:
            continue
        seen.add(length)
        weighted = []
        for rec in records[:length]:
            if rec.enhanced is None:
                rec.enhanced = _enhance_or_keep(rec.component, prep, config.restraints)
            weighted.append((rec.component.weight, rec.enhanced))
        try:
            model = bayes_assign(weighted, prep, unassigned_after[length - 1])
            stats = compute_statistics(model, prep)
            ic = evaluate_criterion(config.criterion, stats)
        except MixtureError:
            rows.append((length, math.inf, math.nan, math.nan))
            continue
        rows.append((model.c, ic, stats.logL, stats.D))
        if best is None or (ic, model.c) < (best[0], best[1].c):
            best = (ic, model, stats)

    if best is None:
        return FixedKResult(model=None, stats=None, ic=math.inf, rows=rows, prep=prep)
    return FixedKResult(model=best[1], stats=best[2], ic=best[0], rows=rows, prep=prep)


# ---------------------------------------------------------------------------
# K sweep with golden-section refinement (loop 4)
# ---------------------------------------------------------------------------

def _resolve_threads(threads: int | None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("MIXCRAFT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def fit(data: Dataset, config: EstimatorConfig | None = None, threads: int | None = None) -> FitResult:
    """Estimate a mixture, selecting both the component count and the
    smoothing parameter by the configured information criterion.

    Distinct K values are independent and evaluated in a thread pool; if the
    grid minimum is interior, a golden-section refinement narrows the search
    between its neighbours.  The whole procedure is deterministic.
    """
    if config is None:
        config = EstimatorConfig()
    if config.k_grid == "auto":
        grid = auto_grid(data.n, config.preprocessing)
    else:
        grid = list(config.k_grid)
    if config.preprocessing == KNN:
        grid = sorted({min(max(2, k), data.n) for k in grid})

    cache: dict[int, FixedKResult] = {}

    def evaluate(k: int) -> FixedKResult:
        if k not in cache:
            prep = preprocess(
                data, config.preprocessing, k,
                y0=config.y0, ymin=config.ymin, ymax=config.ymax,
            )
            cache[k] = fit_fixed_k(prep, config)
        return cache[k]

    workers = min(_resolve_threads(threads), len(grid))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(evaluate, grid))
    else:
        for k in grid:
            evaluate(k)

    def rank(k: int):
        res = cache[k]
        c = res.model.c if res.model is not None else math.inf
        return (res.ic, c, k)

    best_k = min(grid, key=rank)
    pos = grid.index(best_k)
    if 0 < pos < len(grid) - 1 and math.isfinite(cache[best_k].ic):
        golden_section_refine(
            (grid[pos - 1], best_k, grid[pos + 1]),
            lambda k: evaluate(int(k)).ic,
        )

    best_k = min(cache, key=rank)
    chosen = cache[best_k]
    if chosen.model is None:
        raise EmptySelection("estimation failed for every candidate component count")

    all_k = sorted(cache)
    all_ic = [cache[k].ic for k in all_k]
    rows = chosen.rows
    prep = chosen.prep
    summary = {
        "dataset": data.name,
        "preprocessing": config.preprocessing,
        "cmax": config.cmax,
        "criterion": config.criterion,
        "ar": config.ar,
        "restraints": config.restraints,
        "c": chosen.model.c,
        "v_or_k": best_k,
        "y0": None if config.y0 is None else [float(x) for x in np.atleast_1d(config.y0)],
        "ymin": [float(x) for x in prep.lower],
        "ymax": [float(x) for x in prep.upper],
        "h": [float(x) for x in prep.widths],
        "IC": chosen.ic,
        "logL": chosen.stats.logL,
        "M": chosen.stats.M,
    }
    return FitResult(
        model=chosen.model,
        summary=summary,
        stats=chosen.stats,
        opt_c=[r[0] for r in rows],
        opt_ic=[r[1] for r in rows],
        opt_logl=[r[2] for r in rows],
        opt_d=[r[3] for r in rows],
        all_k=all_k,
        all_ic=all_ic,
    )
