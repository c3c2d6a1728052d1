"""Input checks shared by the estimator and the CLI."""

import numpy as np

from .data import SPLIT_NAMES, Dataset
from .exceptions import ConfigError


def check_dataset(ds):
    if not isinstance(ds, Dataset):
        raise TypeError(f"expected a Dataset, got {type(ds).__name__}")
    if len(ds.events) == 0:
        raise ValueError("dataset has no events")
    return ds


def check_labels(labels, ds):
    labels = np.asarray(labels)
    if labels.shape != (len(ds.events),):
        raise ValueError(f"need one split label per event ({len(ds.events)}), got shape {labels.shape}")
    if not np.isin(labels, list(SPLIT_NAMES.values())).all():
        raise ValueError("split labels must be 0 (train), 1 (valid) or 2 (test)")
    return labels.astype(np.int8)


def check_split_name(name):
    if name not in SPLIT_NAMES:
        raise ConfigError(f"split must be one of {sorted(SPLIT_NAMES)}, got {name!r}")
    return SPLIT_NAMES[name]


def check_query(X, ds):
    """``(user, item, timestamp)`` rows as an int64 array with indices in range."""
    X = np.asarray(X, dtype=np.int64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != 3:
        raise ValueError(f"expected rows of (user, item, timestamp), got shape {X.shape}")
    if np.any(X[:, 0] < 0) or np.any(X[:, 0] >= ds.n_users):
        raise ValueError("user index out of range")
    if np.any(X[:, 1] < 0) or np.any(X[:, 1] >= ds.n_items):
        raise ValueError("item index out of range")
    return X

