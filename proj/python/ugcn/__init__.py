"""Python bindings for the ugcn C++ library."""

import json

from ._ugcn import (
    DataError,
    NumericalError,
    gat_conv,
    gc_conv,
    gugc_conv,
    load_dataset,
    stratified_kfold,
    sugc_conv,
    verify,
)

__all__ = [
    "DataError",
    "NumericalError",
    "gat_conv",
    "gc_conv",
    "gugc_conv",
    "load_dataset",
    "stratified_kfold",
    "sugc_conv",
    "train",
    "verify",
]


def train(dataset_dir, name, model="sugcn", *, epochs=500, folds=10, seed=0, hidden=32, blocks=5,
          heads=4, batch_size=32, dropout=0.5, lr=0.001, softmax=True, degree_cap=136):
    """Stratified k-fold cross-validation; returns the metrics record as a dict."""
    from ._ugcn import _train_json

    return json.loads(_train_json(str(dataset_dir), name, model, epochs, folds, seed, hidden, blocks,
                                  heads, batch_size, dropout, lr, softmax, degree_cap))
