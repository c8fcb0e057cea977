"""Feature families derived from XES attributes: n-grams, circular time, lifecycle durations."""
from ._em import MixtureFitError, bic
from .circular import (
    KAPPA_MAX,
    VonMisesMixture,
    fit_vmmm,
    fit_vmmm_detailed,
    timestamp_to_angle,
    vmmm_density,
)
from .extract import (
    CircularTimeSpec,
    FeatureConfig,
    FeatureConfigError,
    FittedFeatureModels,
    LifecycleDurationSpec,
    NGramSpec,
    build_registry,
    extract_features,
    fit_feature_models,
)
from .gaussian import STD_FLOOR, GaussianMixture, fit_gmm, fit_gmm_detailed
from .lifecycle import LifecyclePair, pair_lifecycles
from .ngram import BOUNDARY, MISSING, NGramModel, fit_ngram, ngram_feature
