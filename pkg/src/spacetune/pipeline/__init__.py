"""Feed-forward image feature pipelines used as an optimization target."""

from .cifar import DataError, find_cifar10, load_cifar10, read_cifar_batch, stratified_split, to_gray, write_cifar_batch
from .filters import FilterBank, Whitening, generate_filters, sample_patches, zca_fit
from .model import (
    FEATURE_CAP,
    FilterSpec,
    FittedPipeline,
    InterLayer,
    OuterLayer,
    PipelineConfig,
    config_from_values,
    evaluate_pipeline_loss,
    extract_features,
    features_per_filter,
    fit_pipeline,
    outer_filter_count,
    predict_feature_width,
)
from .ops import (
    DihistParams,
    FbnccParams,
    LnormParams,
    LpoolParams,
    PipelineError,
    dihist,
    fbncc,
    lnorm,
    lpool,
)
from .svm import LinearModel, svm_objective, train_linear_svm
