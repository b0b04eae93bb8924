"""Bit-level linear algebra, binarization geometry, and binary networks."""

from importlib.metadata import PackageNotFoundError, version

from .bitcore import (
    BitMatrix,
    BitVector,
    binarize,
    binarize_matrix,
    dot_bb,
    dot_bb_many,
    dot_rb,
    fwht,
    gbt,
    pack_signs,
    random_rotation,
    unpack_signs,
)
from .bnn import (
    TrainConfig,
    build_network,
    evaluate,
    forward,
    load_checkpoint,
    predict_proba,
    recalibrate_batch_norm,
    save_checkpoint,
    train,
)
from .data_io import Dataset, batches, generate_synthetic, load_idx, write_idx
from .diagnostics import (
    activation_dpp,
    network_dpp_reports,
    pca_spectrum,
    permutation_control,
    weight_angle_histogram,
    weight_component_histogram,
    weight_dpp,
)
from .dynamics import (
    dot_product_estimator_variance,
    simulate_regression,
    simulate_scalar,
)
from .estimators import BinaryMLPClassifier, GeneralizedBinarizer
from .hdgeom import (
    angle_table,
    binarized_cosine_stats,
    expected_cosine_binarized,
    mc_angle_samples,
    variance_cosine_binarized,
)

try:
    __version__ = version("bitgeo")
except PackageNotFoundError:
    __version__ = "0.0.0"

__all__ = [
    "BitMatrix",
    "BitVector",
    "BinaryMLPClassifier",
    "Dataset",
    "GeneralizedBinarizer",
    "TrainConfig",
    "activation_dpp",
    "angle_table",
    "batches",
    "binarize",
    "binarize_matrix",
    "binarized_cosine_stats",
    "build_network",
    "dot_bb",
    "dot_bb_many",
    "dot_product_estimator_variance",
    "dot_rb",
    "evaluate",
    "expected_cosine_binarized",
    "forward",
    "fwht",
    "gbt",
    "generate_synthetic",
    "load_checkpoint",
    "load_idx",
    "mc_angle_samples",
    "network_dpp_reports",
    "pack_signs",
    "pca_spectrum",
    "permutation_control",
    "predict_proba",
    "random_rotation",
    "recalibrate_batch_norm",
    "save_checkpoint",
    "simulate_regression",
    "simulate_scalar",
    "train",
    "unpack_signs",
    "variance_cosine_binarized",
    "weight_angle_histogram",
    "weight_component_histogram",
    "weight_dpp",
    "write_idx",
    "__version__",
]
