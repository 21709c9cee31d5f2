"""Python bindings for the gmmrad C++ core."""

from ._gmmrad import (
    ConfigError,
    DataError,
    GmmradError,
    RandomForest,
    chi_square_compare,
    compute_metrics,
    encode_gmm,
    fit_gmm,
    fit_pca,
    gaussian_pdf,
    read_container,
    roc_auc,
    split_train_val_test,
    synth_bench,
    write_container,
)

__all__ = [
    "ConfigError",
    "DataError",
    "GmmradError",
    "RandomForest",
    "chi_square_compare",
    "compute_metrics",
    "encode_gmm",
    "fit_gmm",
    "fit_pca",
    "gaussian_pdf",
    "read_container",
    "roc_auc",
    "split_train_val_test",
    "synth_bench",
    "write_container",
]
