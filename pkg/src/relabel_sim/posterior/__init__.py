"""Class-posterior estimators used to score samples."""
from .coteaching import BootstrapEnsemble, CoTeachingConfig, HeadEnsemble, fit_co_teaching, fit_ensemble
from .estimators import (POSTERIOR_KINDS, CoTeachingPosterior, EmpiricalPosterior, EnsemblePosterior,
                         GraphPosterior, PosteriorEstimator, SoftmaxPosterior, UniformPosterior,
                         empirical_posteriors, make_posterior)
from .graph import ConvergenceError, GraphConfig, build_knn_graph, spread_labels, spread_raw
from .softmax import SoftmaxHead, SoftmaxHeadConfig, fit_softmax_head, loss_and_grad

__all__ = [
    "BootstrapEnsemble", "CoTeachingConfig", "CoTeachingPosterior", "ConvergenceError",
    "EmpiricalPosterior", "EnsemblePosterior", "GraphConfig", "GraphPosterior", "HeadEnsemble",
    "POSTERIOR_KINDS", "PosteriorEstimator", "SoftmaxHead", "SoftmaxHeadConfig", "SoftmaxPosterior",
    "UniformPosterior", "build_knn_graph", "empirical_posteriors", "fit_co_teaching", "fit_ensemble",
    "fit_softmax_head", "loss_and_grad", "make_posterior", "spread_labels", "spread_raw",
]
