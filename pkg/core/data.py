import re
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple, Union, Optional

import numpy as np
import pandas as pd

from config.experiment_config import CsvSchema, DEFAULT_CONFIGS, SplitSpec
from core.net import Batch
from utils.run_guard import DataFormatError


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Dataset:
    name: str
    features: np.ndarray
    labels: np.ndarray
    feature_names: List[str]
    n_classes: int
    class_names: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> List[int]:
        return np.bincount(self.labels, minlength=self.n_classes).tolist()


def _file_line(row_index: int, schema: CsvSchema) -> int:
    """1-based line number of a data row in the source file"""
    return row_index + (2 if schema.has_header else 1)


def load_csv(path: Union[str, Path], schema: CsvSchema, name: Optional[str] = None) -> Dataset:
    """Read a labelled CSV; every failure names the offending line"""
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"dataset file not found: {path}", path=str(path))

    try:
        frame = pd.read_csv(
            path,
            sep=schema.delimiter,
            header=0 if schema.has_header else None,
            dtype=str,
            skip_blank_lines=True,
            keep_default_na=False
        )
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        line = int(match.group(1)) if match else None
        raise DataFormatError(f"malformed row: {e}", path=str(path), line_number=line) from e
    except pd.errors.EmptyDataError as e:
        raise DataFormatError("dataset file is empty", path=str(path)) from e

    label_column = schema.label_column
    if isinstance(label_column, int):
        if not 0 <= label_column < frame.shape[1]:
            raise DataFormatError(f"label column index {label_column} out of range", path=str(path))
        label_column = frame.columns[label_column]
    elif label_column not in frame.columns:
        raise DataFormatError(f"label column '{label_column}' not in header", path=str(path))

    feature_columns = [col for col in frame.columns if col != label_column]
    raw_features = frame[feature_columns]
    raw_labels = frame[label_column].str.strip()

    # Find the first bad cell so the error can name its line
    numeric = raw_features.apply(lambda col: pd.to_numeric(col.str.strip(), errors='coerce'))
    bad_rows = numeric.isna().any(axis=1)
    if bad_rows.any():
        row = int(np.flatnonzero(bad_rows.to_numpy())[0])
        bad_cols = [col for col in feature_columns if pd.isna(numeric.iloc[row][col])]
        cell = raw_features.iloc[row][bad_cols[0]]
        raise DataFormatError(
            f"non-numeric or missing value {cell!r} in column '{bad_cols[0]}'",
            path=str(path), line_number=_file_line(row, schema)
        )

    class_names = list(schema.class_names) or sorted(raw_labels.unique().tolist())
    class_index = {label: i for i, label in enumerate(class_names)}
    unknown = ~raw_labels.isin(class_index.keys())
    if unknown.any():
        row = int(np.flatnonzero(unknown.to_numpy())[0])
        raise DataFormatError(
            f"unknown class label {raw_labels.iloc[row]!r}",
            path=str(path), line_number=_file_line(row, schema)
        )

    dataset = Dataset(
        name=name or path.stem,
        features=numeric.to_numpy(dtype=np.float64),
        labels=raw_labels.map(class_index).to_numpy(dtype=np.int64),
        feature_names=[str(col) for col in feature_columns],
        n_classes=len(class_names),
        class_names=class_names
    )

    logger.info(
        f"Loaded {dataset.name}: {len(dataset)} rows, {dataset.n_features} features, "
        f"class counts {dataset.class_counts()}"
    )
    return dataset


def load_dataset(name: str, path: Optional[Union[str, Path]] = None,
                 label_column: Optional[Union[str, int]] = None) -> Dataset:
    """Embedded dataset by name, or a custom CSV read with that preset's schema"""
    preset = DEFAULT_CONFIGS.get(name)

    if path is None:
        if preset is None:
            raise DataFormatError(f"unknown embedded dataset '{name}'")
        return load_csv(preset.path, preset.schema, name=name)

    if label_column is not None:
        schema = CsvSchema(label_column=label_column)
    elif preset is not None:
        schema = preset.schema
    else:
        raise DataFormatError(f"custom dataset '{name}' needs a label column", path=str(path))
    return load_csv(path, schema, name=name)


def split_standardize(ds: Dataset, spec: SplitSpec, seed: Optional[int] = None) -> Tuple[Batch, Batch]:
    """Seeded shuffle split; standardize with train statistics when asked.

    `spec.seed` wins over `seed`; one of them must be set.
    """
    split_seed = spec.seed if spec.seed is not None else seed
    if split_seed is None:
        raise ValueError("split needs a seed (SplitSpec.seed or the run seed)")

    n = len(ds)
    n_train = int(round(spec.train_fraction * n))
    n_train = min(max(n_train, 1), n - 1)

    order = np.random.default_rng(split_seed).permutation(n)
    train_idx, test_idx = order[:n_train], order[n_train:]

    train_x = ds.features[train_idx]
    test_x = ds.features[test_idx]

    if spec.standardize:
        mean = train_x.mean(axis=0)
        std = train_x.std(axis=0)
        degenerate = std == 0
        if degenerate.any():
            names = [ds.feature_names[i] for i in np.flatnonzero(degenerate)]
            logger.warning(f"Zero-variance features on train split, stddev clamped to 1: {names}")
            std = np.where(degenerate, 1.0, std)
        train_x = (train_x - mean) / std
        test_x = (test_x - mean) / std

    train = Batch(train_x, ds.labels[train_idx])
    test = Batch(test_x, ds.labels[test_idx])

    logger.info(
        f"Split {ds.name} (seed {split_seed}): train {len(train)} rows "
        f"{np.bincount(train.labels, minlength=ds.n_classes).tolist()}, test {len(test)} rows "
        f"{np.bincount(test.labels, minlength=ds.n_classes).tolist()}"
    )
    return train, test


# -- analytic test functions ---------------------------------------------------

class AnalyticFn:
    """Closed-form objective with gradient.

    Separable families evaluate elementwise; `objective` sums over the vector.
    """

    name = "analytic"

    def eval(self, theta):
        raise NotImplementedError

    def grad(self, theta):
        raise NotImplementedError

    def objective(self, theta) -> float:
        return float(np.sum(self.eval(np.asarray(theta, dtype=np.float64))))


class Quadratic(AnalyticFn):
    """a (theta - c)^2 + d"""

    name = "quadratic"

    def __init__(self, a: float = 1.0, c: float = 2.0, d: float = 2.0):
        if not a > 0:
            raise ValueError(f"quadratic needs a > 0, got {a}")
        self.a, self.c, self.d = float(a), float(c), float(d)

    def eval(self, theta):
        return self.a * (theta - self.c) ** 2 + self.d

    def grad(self, theta):
        return 2.0 * self.a * (theta - self.c)


class AbsVal(AnalyticFn):
    """|theta - c|, gradient sign(theta - c) with 0 at the kink"""

    name = "absval"

    def __init__(self, c: float = 0.0):
        self.c = float(c)

    def eval(self, theta):
        return np.abs(theta - self.c)

    def grad(self, theta):
        return np.sign(theta - self.c)


class LogCosh(AnalyticFn):
    """log(cosh(theta - c)): quadratic near c, nearly linear (flat gradient) far away.

    Evaluated directly so a far-away parameter overflows to inf instead of
    being rescued by a stable formulation.
    """

    name = "logcosh"

    def __init__(self, c: float = 0.0):
        self.c = float(c)

    def eval(self, theta):
        with np.errstate(over='ignore'):
            return np.log(np.cosh(theta - self.c))

    def grad(self, theta):
        return np.tanh(theta - self.c)


class Rosenbrock2D(AnalyticFn):
    """(a - x)^2 + b (y - x^2)^2 on 2-vectors"""

    name = "rosenbrock"

    def __init__(self, a: float = 1.0, b: float = 100.0):
        self.a, self.b = float(a), float(b)

    def eval(self, theta):
        x, y = theta[..., 0], theta[..., 1]
        return (self.a - x) ** 2 + self.b * (y - x ** 2) ** 2

    def grad(self, theta):
        x, y = theta[..., 0], theta[..., 1]
        dx = -2.0 * (self.a - x) - 4.0 * self.b * x * (y - x ** 2)
        dy = 2.0 * self.b * (y - x ** 2)
        return np.stack([dx, dy], axis=-1)


def quadratic(a: float, c: float, d: float) -> Quadratic:
    return Quadratic(a, c, d)
