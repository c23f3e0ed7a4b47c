import json
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Any, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from utils.run_guard import ConfigError


DATASETS_DIR = Path(__file__).resolve().parent.parent / "datasets"

OPTIMIZER_NAMES = ("eagle", "adam", "sgd_momentum")


@dataclass
class CsvSchema:
    """How to read one dataset CSV"""
    label_column: Union[str, int]
    class_names: List[str] = None
    has_header: bool = True
    delimiter: str = ","

    def __post_init__(self):
        if self.class_names is None:
            self.class_names = []


@dataclass
class DatasetPreset:
    """Configuration for one embedded dataset"""
    name: str
    csv_file: str
    schema: CsvSchema
    layer_dims: List[int] = field(default_factory=list)
    landscape_samples: List[int] = field(default_factory=list)

    @property
    def path(self) -> Path:
        return DATASETS_DIR / self.csv_file


# Embedded UCI datasets and their model sizes
DEFAULT_CONFIGS = {
    "iris": DatasetPreset(
        name="iris",
        csv_file="iris.csv",
        schema=CsvSchema(
            label_column="species",
            class_names=["Iris-setosa", "Iris-versicolor", "Iris-virginica"]
        ),
        layer_dims=[4, 25, 3],
        landscape_samples=[50, 40]
    ),

    "wine": DatasetPreset(
        name="wine",
        csv_file="wine.csv",
        schema=CsvSchema(
            label_column="class",
            class_names=["1", "2", "3"]
        ),
        layer_dims=[13, 15, 3],
        landscape_samples=[60, 30]
    )
}

# Seeds drawn once from 1..10000 for the 10-seed protocol
DEFAULT_SEEDS = [3958, 1069, 1917, 5609, 8860, 5562, 9101, 8474, 3174, 4748]

DEFAULT_THRESHOLDS = [1e-3, 7e-4, 4e-4, 1e-4]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class EagleConfig(_Strict):
    """Hyperparameters of the EAGLE rule and of its Adam branch"""
    alpha: float = Field(0.001, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    epsilon: float = Field(1e-8, gt=0)
    threshold: float = Field(0.0005, gt=0)


class MomentumConfig(_Strict):
    """SGD with Polyak momentum"""
    lr: float = Field(0.01, gt=0)
    mu: float = Field(0.9, ge=0, lt=1)


class SplitSpec(_Strict):
    train_fraction: float = Field(0.8, gt=0, lt=1)
    # None: split with the run seed
    seed: Optional[int] = None
    standardize: bool = True


class LayerSpecModel(_Strict):
    in_dim: int = Field(gt=0)
    out_dim: int = Field(gt=0)
    activation: Literal["relu", "identity"] = "relu"


class ScanSpec(_Strict):
    """One-parameter-at-a-time landscape sweep settings"""
    checkpoint: Optional[str] = None
    split: Literal["train", "full"] = "train"
    # None: per-layer counts from the dataset preset
    samples_per_layer: Optional[List[int]] = None
    sweep_half_width: float = Field(5.0, gt=0)
    n_points: int = Field(1000, ge=3)
    seed: int = 0
    osc_count: int = Field(4, ge=0)
    tol_rel: float = Field(1e-9, ge=0)
    range_floor_rel: float = Field(1e-4, ge=0)
    range_floor_min: float = Field(1e-12, ge=0)

    @property
    def spacing(self) -> float:
        return 2.0 * self.sweep_half_width / self.n_points

    @field_validator("samples_per_layer")
    @classmethod
    def _positive_counts(cls, value):
        if value is not None and any(count <= 0 for count in value):
            raise ValueError("samples_per_layer entries must be positive")
        return value


class ExperimentConfig(_Strict):
    """Everything one train/compare/usage/landscape invocation needs"""
    dataset: str = "iris"
    # Custom CSV instead of an embedded dataset; the preset named by
    # `dataset` still supplies the schema unless label_column is given
    dataset_path: Optional[str] = None
    label_column: Optional[Union[str, int]] = None
    architecture: Optional[List[LayerSpecModel]] = None
    optimizer: Literal["eagle", "adam", "sgd_momentum"] = "eagle"
    optimizers: List[Literal["eagle", "adam", "sgd_momentum"]] = Field(
        default_factory=lambda: list(OPTIMIZER_NAMES), min_length=1
    )
    eagle: EagleConfig = Field(default_factory=EagleConfig)
    momentum: MomentumConfig = Field(default_factory=MomentumConfig)
    epochs: int = Field(100, ge=1)
    seeds: List[int] = Field(default_factory=lambda: list(DEFAULT_SEEDS), min_length=1)
    split: SplitSpec = Field(default_factory=SplitSpec)
    # None: full batch (one update per epoch)
    batch_size: Optional[int] = Field(8, gt=0)
    output_dir: Optional[str] = None
    jobs: Optional[int] = Field(None, gt=0)
    thresholds: List[float] = Field(default_factory=lambda: list(DEFAULT_THRESHOLDS), min_length=1)
    metric3_epochs: List[int] = Field(default_factory=lambda: [2, 4, 6, 8, 10], min_length=1)
    early_epochs: int = Field(10, ge=1)
    usage_early_epoch: int = Field(10, ge=1)
    landscape: ScanSpec = Field(default_factory=ScanSpec)

    @field_validator("thresholds")
    @classmethod
    def _nonnegative_thresholds(cls, value):
        # 0 is allowed here: usage_by_threshold treats it as "condition1 never fires"
        if any(not (t >= 0) for t in value):
            raise ValueError("thresholds must be >= 0")
        return value

    @field_validator("metric3_epochs")
    @classmethod
    def _positive_epochs(cls, value):
        if any(epoch < 1 for epoch in value):
            raise ValueError("metric3_epochs must be >= 1")
        return value

    @model_validator(mode="after")
    def _check_dataset_and_architecture(self):
        if self.dataset_path is None and self.dataset not in DEFAULT_CONFIGS:
            known = ", ".join(sorted(DEFAULT_CONFIGS))
            raise ValueError(f"unknown dataset '{self.dataset}' (known: {known}) and no dataset_path given")

        if self.architecture is not None:
            if not self.architecture:
                raise ValueError("architecture must contain at least one layer")
            for prev, nxt in zip(self.architecture, self.architecture[1:]):
                if prev.out_dim != nxt.in_dim:
                    raise ValueError(f"layer dims do not chain: {prev.out_dim} -> {nxt.in_dim}")
            if self.architecture[-1].activation != "identity":
                raise ValueError("last layer must use the identity activation")
        elif self.dataset not in DEFAULT_CONFIGS:
            raise ValueError("architecture is required for a custom dataset")
        return self

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "ExperimentConfig":
        """Load and validate a JSON config file"""
        path = Path(path)
        try:
            with open(path, 'r', encoding='utf-8') as f:
                payload = json.load(f)
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}", field="config") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file is not valid JSON: {e}", field="config") from e

        if not isinstance(payload, dict):
            raise ConfigError("config file must hold a JSON object", field="config")

        return cls.model_validate(payload)

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        """Return a re-validated copy; None values mean "not given".

        Keys may be dotted ("eagle.threshold") to reach nested sections.
        """
        payload = self.model_dump()
        allowed = set(payload)

        for key, value in overrides.items():
            if value is None:
                continue
            head, _, tail = key.partition(".")
            if head not in allowed:
                raise ConfigError(f"unknown override '{key}'", field=key)
            if tail:
                section = payload[head]
                if not isinstance(section, dict) or tail not in section:
                    raise ConfigError(f"unknown override '{key}'", field=key)
                section[tail] = value
            else:
                payload[head] = value

        return type(self).model_validate(payload)

    # -- derived values -------------------------------------------------------

    @property
    def preset(self) -> Optional[DatasetPreset]:
        return DEFAULT_CONFIGS.get(self.dataset)

    def layer_specs(self) -> List[LayerSpecModel]:
        """Architecture from the config or from the dataset preset"""
        if self.architecture is not None:
            return list(self.architecture)

        dims = self.preset.layer_dims
        last = len(dims) - 2
        return [
            LayerSpecModel(
                in_dim=dims[i],
                out_dim=dims[i + 1],
                activation="identity" if i == last else "relu"
            )
            for i in range(len(dims) - 1)
        ]

    def landscape_samples(self) -> List[int]:
        if self.landscape.samples_per_layer is not None:
            return list(self.landscape.samples_per_layer)
        if self.preset is not None and self.preset.landscape_samples:
            return list(self.preset.landscape_samples)
        return [10] * len(self.layer_specs())

    def to_json_dict(self) -> Dict[str, Any]:
        """Plain dict; infinite floats stay floats so json writes Infinity"""
        return self.model_dump(mode="python")

    def config_hash(self) -> str:
        """Short content hash of the settings that influence results"""
        payload = self.to_json_dict()
        payload.pop("output_dir", None)
        payload.pop("jobs", None)
        canonical = json.dumps(payload, sort_keys=True, default=str)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def parse_threshold_list(text: str) -> List[float]:
    """Parse "1e-3,7e-4" style flag values"""
    values = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            value = float(part)
        except ValueError as e:
            raise ConfigError(f"not a number: '{part}'", field="thresholds") from e
        if math.isnan(value) or value < 0:
            raise ConfigError(f"threshold must be >= 0: '{part}'", field="thresholds")
        values.append(value)

    if not values:
        raise ConfigError("no thresholds given", field="thresholds")
    return values
