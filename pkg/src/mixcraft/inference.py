"""Downstream inference: bootstrap uncertainty, entropy-merge clustering,
and supervised Bayes classification."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import Dataset, round_half_up
from .errors import DimensionMismatch, LengthMismatch
from .estimator import EstimatorConfig, FitResult, fit
from .model import MixtureModel, mixture_logpdf, posterior_tau, sample

PARAMETRIC = "parametric"
NONPARAMETRIC = "nonparametric"


# ---------------------------------------------------------------------------
# bootstrap
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BootstrapResult:
    """Replicate component counts plus dispersion of the modal-count fits."""

    B: int                    # replicates that produced a fit
    mode: str                 # parametric or nonparametric
    c_all: list[int]
    c_mode: int
    c_prob: float
    c_se: float
    c_cv: float
    w_se: np.ndarray          # (c_mode,)
    w_cv: np.ndarray
    mu_se: np.ndarray         # (c_mode, d)
    mu_cv: np.ndarray
    sigma_se: np.ndarray      # (c_mode, d, d)
    sigma_cv: np.ndarray


def _match_components(reference: MixtureModel, replicate: MixtureModel) -> list[int]:
    """Greedy global nearest-mean pairing; each component used once.

    Returns, for every reference component, the index of its replicate
    partner (the two models share a component count when this is called).
    """
    ref = np.stack([c.mu for c in reference.components])
    rep = np.stack([c.mu for c in replicate.components])
    dist = np.linalg.norm(ref[:, None, :] - rep[None, :, :], axis=2)
    pairs = sorted(
        ((dist[i, j], i, j) for i in range(len(ref)) for j in range(len(rep))),
        key=lambda t: (t[0], t[1], t[2]),
    )
    out = [-1] * len(ref)
    used_ref, used_rep = set(), set()
    for _, i, j in pairs:
        if i in used_ref or j in used_rep:
            continue
        out[i] = j
        used_ref.add(i)
        used_rep.add(j)
        if len(used_ref) == len(ref):
            break
    return out


def _se_cv(samples: np.ndarray, axis=0):
    """Sample standard error (ddof=1) and signed coefficient of variation."""
    mean = samples.mean(axis=axis)
    if samples.shape[axis] < 2:
        se = np.zeros_like(mean)
    else:
        se = samples.std(axis=axis, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cv = np.where(mean != 0.0, se / mean, np.nan)
    return se, cv


def bootstrap(
    fitted: FitResult,
    data: Dataset,
    mode: str,
    B: int,
    rng: np.random.Generator,
    config: EstimatorConfig,
    threads: int | None = None,
) -> BootstrapResult:
    """Refit ``B`` resampled datasets and summarise the spread of the results.

    Parametric replicates are drawn from the fitted model at the original
    size; nonparametric replicates resample rows with replacement.  Standard
    errors and coefficients of variation are computed only over replicates
    whose component count equals the modal count, after a nearest-mean
    matching to the reference components.
    """
    if B < 2:
        raise ValueError(f"need at least 2 bootstrap replicates, got {B}")
    if mode not in (PARAMETRIC, NONPARAMETRIC):
        raise ValueError(f"mode must be '{PARAMETRIC}' or '{NONPARAMETRIC}', got {mode!r}")

    model = fitted.model
    n = data.n
    if mode == PARAMETRIC:
        n_per = [round_half_up(wl * n) for wl in model.weights]

    seeds = np.random.SeedSequence(rng.integers(0, 2**63 - 1)).spawn(B)

    def one_replicate(b: int) -> MixtureModel | None:
        sub = np.random.Generator(np.random.PCG64(seeds[b]))
        if mode == PARAMETRIC:
            labelled = sample(model, n_per, sub, name=f"{data.name}_boot{b}")
            replicate = labelled.data
        else:
            rows = sub.integers(0, n, size=n)
            replicate = Dataset(data.values[rows], name=f"{data.name}_boot{b}")
        try:
            return fit(replicate, config, threads=1).model
        except Exception:
            return None

    workers = max(1, min(threads if threads is not None else 1, B))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            fits = list(pool.map(one_replicate, range(B)))
    else:
        fits = [one_replicate(b) for b in range(B)]

    kept = [m for m in fits if m is not None]
    failed = B - len(kept)
    if failed:
        warnings.warn(f"{failed} of {B} bootstrap replicates failed and were dropped")
    if len(kept) < 2:
        raise ValueError("fewer than 2 bootstrap replicates produced a fit")

    c_all = [m.c for m in kept]
    counts: dict[int, int] = {}
    for c in c_all:
        counts[c] = counts.get(c, 0) + 1
    c_mode = min(counts, key=lambda c: (-counts[c], c))
    c_prob = counts[c_mode] / len(kept)
    c_arr = np.array(c_all, dtype=float)
    c_se = float(c_arr.std(ddof=1))
    c_cv = float(c_se / c_arr.mean()) if c_arr.mean() != 0 else math.nan

    modal = [m for m in kept if m.c == c_mode]
    if model.c == c_mode:
        reference = model
    else:
        reference = modal[0]
    d = model.d
    w_samples = np.empty((len(modal), c_mode))
    mu_samples = np.empty((len(modal), c_mode, d))
    sigma_samples = np.empty((len(modal), c_mode, d, d))
    for i, m in enumerate(modal):
        pairing = _match_components(reference, m)
        for l, j in enumerate(pairing):
            w_samples[i, l] = m.weights[j]
            mu_samples[i, l] = m.components[j].mu
            sigma_samples[i, l] = m.components[j].sigma

    w_se, w_cv = _se_cv(w_samples)
    mu_se, mu_cv = _se_cv(mu_samples)
    sigma_se, sigma_cv = _se_cv(sigma_samples)
    return BootstrapResult(
        B=len(kept),
        mode=mode,
        c_all=c_all,
        c_mode=int(c_mode),
        c_prob=float(c_prob),
        c_se=c_se,
        c_cv=c_cv,
        w_se=w_se,
        w_cv=w_cv,
        mu_se=mu_se,
        mu_cv=mu_cv,
        sigma_se=sigma_se,
        sigma_cv=sigma_cv,
    )


# ---------------------------------------------------------------------------
# entropy-merge clustering
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ClusteringResult:
    """Hierarchy of cluster assignments from c clusters down to one.

    ``levels[i]`` is the cluster count; ``zp[i]`` the per-row labels at that
    level; ``entropy[i]`` the soft-assignment entropy.  ``merges`` records,
    for every level below the top, which cluster was folded into which and
    the entropy decrease that bought.
    """

    levels: list[int]
    zp: list[np.ndarray]
    entropy: list[float]
    merges: list[tuple[int, int, int, float]]  # (level, from, to, entropy decrease)
    prob: list[float] | None


def _entropy_terms(cols: np.ndarray) -> np.ndarray:
    safe = np.where(cols > 0.0, cols, 1.0)
    return -cols * np.log(safe)


def merge_clusters(fitted: FitResult | MixtureModel, data: Dataset, truth=None) -> ClusteringResult:
    """Merge mixture components into clusters by maximal entropy decrease.

    Starts from one cluster per component and repeatedly folds together the
    pair whose combined responsibilities lose the most entropy, recording
    assignments at every level.  With true labels supplied, each level also
    reports the plurality-mapped correct-clustering probability.
    """
    model = fitted.model if isinstance(fitted, FitResult) else fitted
    tau = np.atleast_2d(posterior_tau(model, data.values))
    c = model.c
    reps = list(range(1, c + 1))  # representative label: smallest member id
    cols = tau.copy()

    levels = [c]
    zp = [np.asarray(reps)[np.argmax(cols, axis=1)]]
    entropy = [float(_entropy_terms(cols).sum())]
    merges: list[tuple[int, int, int, float]] = []

    while cols.shape[1] > 1:
        k = cols.shape[1]
        terms = _entropy_terms(cols).sum(axis=0)
        best = None
        for a in range(k):
            for b in range(a + 1, k):
                merged = _entropy_terms(cols[:, a] + cols[:, b]).sum()
                decrease = terms[a] + terms[b] - merged
                key = (-decrease, reps[a], reps[b])
                if best is None or key < best[0]:
                    best = (key, a, b, decrease)
        _, a, b, decrease = best
        src, dst = (a, b) if reps[a] > reps[b] else (b, a)
        merges.append((k - 1, reps[src], reps[dst], float(decrease)))
        cols[:, dst] = cols[:, dst] + cols[:, src]
        cols = np.delete(cols, src, axis=1)
        del reps[src]
        levels.append(cols.shape[1])
        zp.append(np.asarray(reps)[np.argmax(cols, axis=1)])
        entropy.append(float(_entropy_terms(cols).sum()))

    prob = None
    if truth is not None:
        truth = np.asarray(truth, dtype=int)
        prob = [correct_clustering_prob(z, truth) for z in zp]
    return ClusteringResult(levels=levels, zp=zp, entropy=entropy, merges=merges, prob=prob)


def correct_clustering_prob(zp, zt) -> float:
    """Fraction correct after mapping each predicted cluster to the true
    cluster holding the plurality of its members (many-to-one)."""
    zp = np.asarray(zp)
    zt = np.asarray(zt)
    if zp.shape != zt.shape:
        raise LengthMismatch(f"predicted {zp.shape} vs true {zt.shape}")
    correct = 0
    for label in np.unique(zp):
        members = zt[zp == label]
        _, counts = np.unique(members, return_counts=True)
        correct += int(counts.max())
    return float(correct / zp.size)


# ---------------------------------------------------------------------------
# supervised classification
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ClassificationResult:
    """Predictions of a per-class mixture Bayes classifier plus its metrics.

    Metric entries are NaN where the one-vs-rest ratio is undefined; report
    writers must render those as a marker, never as zero.
    """

    s: int
    priors: np.ndarray
    zp: np.ndarray
    cm: np.ndarray | None          # (s, s) counts, rows = true, cols = predicted
    accuracy: float | None
    error: float | None
    precision: np.ndarray | None
    sensitivity: np.ndarray | None
    specificity: np.ndarray | None


def classify(class_models, priors, test: Dataset, truth=None) -> ClassificationResult:
    """Assign each test row to the class maximising prior times mixture density.

    ``class_models`` holds one fitted mixture per class (FitResult or
    MixtureModel), ordered by class id 1..s; ``priors`` are the train-side
    class proportions (any common rescaling leaves predictions unchanged).
    """
    models = [m.model if isinstance(m, FitResult) else m for m in class_models]
    pri = np.asarray(priors, dtype=float)
    if pri.size != len(models):
        raise DimensionMismatch(f"{len(models)} models but {pri.size} priors")
    if np.any(pri <= 0.0):
        raise ValueError("class priors must be strictly positive")
    pri = pri / pri.sum()
    for m in models:
        if m.d != test.d:
            raise DimensionMismatch(f"model dimension {m.d} differs from test dimension {test.d}")
    scores = np.stack(
        [np.log(p) + np.atleast_1d(mixture_logpdf(m, test.values)) for p, m in zip(pri, models)],
        axis=1,
    )
    zp = np.argmax(scores, axis=1) + 1

    if truth is None:
        return ClassificationResult(
            s=len(models), priors=pri, zp=zp, cm=None, accuracy=None, error=None,
            precision=None, sensitivity=None, specificity=None,
        )
    zt = np.asarray(truth, dtype=int)
    if zt.shape != zp.shape:
        raise LengthMismatch(f"{zp.size} predictions vs {zt.size} true labels")
    s = len(models)
    cm = np.zeros((s, s), dtype=int)
    for t, p in zip(zt, zp):
        cm[t - 1, p - 1] += 1
    metrics = confusion_metrics(cm)
    return ClassificationResult(
        s=s, priors=pri, zp=zp, cm=cm,
        accuracy=metrics["accuracy"], error=metrics["error"],
        precision=metrics["precision"], sensitivity=metrics["sensitivity"],
        specificity=metrics["specificity"],
    )


def confusion_metrics(cm) -> dict:
    """One-vs-rest metrics from a confusion matrix (rows true, cols predicted).

    Undefined ratios (empty class or empty prediction column) come back NaN.
    """
    cm = np.asarray(cm, dtype=float)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise DimensionMismatch(f"confusion matrix must be square, got {cm.shape}")
    if np.any(cm < 0):
        raise ValueError("confusion matrix entries must be non-negative")
    total = cm.sum()
    diag = np.diagonal(cm)
    accuracy = float(diag.sum() / total) if total > 0 else math.nan
    col = cm.sum(axis=0)
    row = cm.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(col > 0, diag / col, np.nan)
        sensitivity = np.where(row > 0, diag / row, np.nan)
        tn = total - row - col + diag
        fp = col - diag
        specificity = np.where((tn + fp) > 0, tn / (tn + fp), np.nan)
    return {
        "accuracy": accuracy,
        "error": 1.0 - accuracy if not math.isnan(accuracy) else math.nan,
        "precision": precision,
        "sensitivity": sensitivity,
        "specificity": specificity,
    }
