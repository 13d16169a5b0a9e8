"""input/output functions"""
import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .core import Dataset, avg_loglik
from .exceptions import InputError, ParameterError
from .findata import PriceTable

L = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def _to_builtin(value):
    """Convert numpy containers and scalars for json."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def save_json(data, filename):
    """Save a dict as indented json, numpy values included."""
    Path(filename).parent.mkdir(parents=True, exist_ok=True)
    with open(filename, "w") as json_file:
        json.dump(data, json_file, indent=2, default=_to_builtin, allow_nan=True)


def load_json(filename):
    """Load a json file."""
    with open(filename, "r") as json_file:
        return json.load(json_file)


def load_dataset(filename, header=False):
    """Load samples from a csv file without header, one row per observation.

    Raises:
        InputError: if the file cannot be read or has non-numeric entries
    """
    try:
        frame = pd.read_csv(filename, header=None, skiprows=1 if header else 0)
        return Dataset(frame.to_numpy(dtype=float))
    except (OSError, ValueError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise InputError(f"Cannot read dataset {filename}: {exc}") from exc


def save_dataset(dataset, filename):
    """Save samples as a csv file without header."""
    Path(filename).parent.mkdir(parents=True, exist_ok=True)
    samples = dataset.samples if isinstance(dataset, Dataset) else np.asarray(dataset)
    pd.DataFrame(samples).to_csv(filename, header=False, index=False)


def load_matrix(filename):
    """Load a square matrix from a csv file without header."""
    try:
        return pd.read_csv(filename, header=None).to_numpy(dtype=float)
    except (OSError, ValueError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise InputError(f"Cannot read matrix {filename}: {exc}") from exc


def save_estimate(estimate, folder, data=None, extra=None):
    """Save an estimate as sigma.csv and estimate.json in folder.

    Args:
        estimate (FactorModelEstimate): estimate to save
        folder (str): output folder
        data (Dataset): training data, to record the in-sample average log-likelihood
        extra (dict): additional entries of estimate.json
    """
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(estimate.sigma).to_csv(folder / "sigma.csv", header=False, index=False)
    record = {
        "schema_version": SCHEMA_VERSION,
        "rank": estimate.rank,
        "m": estimate.m,
        "loadings": estimate.loadings,
        "residual": estimate.residual,
        "metadata": estimate.metadata,
    }
    if data is not None:
        record["avg_loglik"] = avg_loglik(estimate.sigma, data)
    record.update(extra or {})
    save_json(record, folder / "estimate.json")
    return record


def save_ground_truth(truth, filename):
    """Save the ground truth of a synthetic draw as json."""
    save_json(dict(truth.to_dict(), schema_version=SCHEMA_VERSION), filename)


def save_table(frame, filename):
    """Save a tidy dataframe as csv without index."""
    Path(filename).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(filename, index=False)


def load_table(filename):
    """Load a csv table saved with save_table."""
    return pd.read_csv(filename)


def load_price_table(filename):
    """Load adjusted close prices, dates as first column and tickers as header.

    Raises:
        InputError: if the file cannot be read or the table is invalid
    """
    try:
        frame = pd.read_csv(filename, index_col=0)
    except (OSError, ValueError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise InputError(f"Cannot read prices {filename}: {exc}") from exc
    return PriceTable.from_frame(frame)


def save_return_panel(panel, folder):
    """Save normalized returns (no header) and preprocessing metadata in folder."""
    folder = Path(folder)
    save_dataset(panel.returns, folder / "returns.csv")
    metadata = dict(panel.metadata, tickers=panel.tickers, dates=panel.dates)
    metadata["schema_version"] = SCHEMA_VERSION
    save_json(metadata, folder / "metadata.json")


def load_config(filename):
    """Load a json or yaml run configuration as a dict.

    Raises:
        ParameterError: if the file does not hold a mapping
    """
    try:
        with open(filename, "r") as config_file:
            config = yaml.safe_load(config_file)
    except (OSError, yaml.YAMLError) as exc:
        raise InputError(f"Cannot read config {filename}: {exc}") from exc
    if config is None:
        return {}
    if not isinstance(config, dict):
        raise ParameterError(f"Config {filename} must hold a mapping of settings")
    return config
