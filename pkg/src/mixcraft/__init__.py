"""Finite mixtures of multivariate normals with unrestricted covariances.

Estimation proceeds component by component: empirical densities from a
histogram, Parzen window or k-nearest-neighbour pass; a rough component
shaped at the global mode; maximum-likelihood enhancement; Bayes
classification of the residue; and information-criterion selection of both
the component count and the smoothing parameter.  Random dataset
generation, bootstrap uncertainty, entropy-merge clustering and supervised
classification ride on top.
"""

__version__ = "0.1.0"

from .data import Dataset, LabeledDataset, SplitResult, load_csv, split
from .estimator import EstimatorConfig, FitResult, fit, fit_fixed_k, peel_components
from .inference import (
    BootstrapResult,
    ClassificationResult,
    ClusteringResult,
    bootstrap,
    classify,
    confusion_metrics,
    correct_clustering_prob,
    merge_clusters,
)
from .model import (
    Component,
    GeneratorSpec,
    MixtureModel,
    component_pdf,
    generate_random_model,
    log_likelihood,
    mixture_pdf,
    posterior_tau,
    sample,
)
from .preprocess import (
    HISTOGRAM,
    KNN,
    PARZEN,
    build_histogram,
    global_mode,
    golden_section_refine,
    knn_density,
    parzen_density,
)

__all__ = [
    "Dataset",
    "LabeledDataset",
    "SplitResult",
    "load_csv",
    "split",
    "EstimatorConfig",
    "FitResult",
    "fit",
    "fit_fixed_k",
    "peel_components",
    "BootstrapResult",
    "ClassificationResult",
    "ClusteringResult",
    "bootstrap",
    "classify",
    "confusion_metrics",
    "correct_clustering_prob",
    "merge_clusters",
    "Component",
    "GeneratorSpec",
    "MixtureModel",
    "component_pdf",
    "generate_random_model",
    "log_likelihood",
    "mixture_pdf",
    "posterior_tau",
    "sample",
    "HISTOGRAM",
    "KNN",
    "PARZEN",
    "build_histogram",
    "global_mode",
    "golden_section_refine",
    "knn_density",
    "parzen_density",
]
