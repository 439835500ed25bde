"""Interpretable short-term load forecasting.

Multi-scale moving-average decomposition feeds an additive model whose
combination weights double as significance scores for each time scale
and each auxiliary feature.
"""

from .config import RunConfig, bundled_config, bundled_synthetic_spec, load_config
from .dataset import (
    CsvSchema,
    SplitSpec,
    Standardization,
    SyntheticSpec,
    TimeSeriesDataset,
    WindowSet,
    generate_synthetic,
    load_csv,
    make_windows,
    split,
    standardize,
    window_set,
)
from .decomposition import DecomposedSeries, DecompositionConfig, decompose_multiscale, moving_average_trend
from .errors import LoadLensError, RuntimeFailure, ValidationError
from .features import FeatureEncoderBank, combine_features, encode_feature
from .interpret import (
    PerturbationSpec,
    SignificanceReport,
    compare_significance,
    extract_significance,
    run_perturbations,
)
from .metrics import MetricsReport, evaluate, mae, mape, mse, rmse, scale_relations
from .model import (
    AdditiveForecaster,
    ModelConfig,
    TrainConfig,
    TrainedModel,
    load_checkpoint,
    persistence_forecast,
    predict,
    save_checkpoint,
    train,
)
from .pipeline import Experiment, fit, prepare_data, score
from .similarity import SimilarityProfile, recommend_kernels, similarity_profile

__version__ = "0.1.0"
