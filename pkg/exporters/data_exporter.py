import json
import logging
from datetime import datetime
from pathlib import Path
from typing import List, Dict, Any, Optional, Sequence, Union

import numpy as np
import pandas as pd


METRIC_COLUMNS = ["epoch", "train_loss", "train_acc", "test_loss", "test_acc", "eagle_usage_rate"]

# 17 significant digits round-trip any float64
FLOAT_FORMAT = "%.17g"


class ResultExporter:
    """Write experiment outputs as CSV and JSON under one run directory"""

    def __init__(self, output_dir: Union[str, Path] = "output"):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

        self.logger = logging.getLogger(__name__)
        self.written: List[str] = []

    def _validate_data(self, data: Union[pd.DataFrame, List[Dict[str, Any]]]) -> bool:
        """Validate rows before export"""
        if isinstance(data, pd.DataFrame):
            return True

        if not isinstance(data, list):
            self.logger.error("Data must be a DataFrame or a list of dictionaries")
            return False

        if not all(isinstance(item, dict) for item in data):
            self.logger.error("All data items must be dictionaries")
            return False

        return True

    def to_csv(self, data: Union[pd.DataFrame, List[Dict[str, Any]]], filename: str,
               columns: Optional[Sequence[str]] = None) -> str:
        """Export rows to CSV: header row, '.' decimal separator, 17-digit floats"""
        if not self._validate_data(data):
            raise ValueError("Invalid data format")

        filepath = self.output_dir / filename

        try:
            if isinstance(data, pd.DataFrame):
                df = data
            else:
                df = pd.DataFrame(data) if data else pd.DataFrame(columns=columns)

            if columns is not None:
                # Keep the requested order, extra columns go last
                available = [col for col in columns if col in df.columns]
                others = [col for col in df.columns if col not in columns]
                df = df[available + others]

            df.to_csv(filepath, index=False, float_format=FLOAT_FORMAT, encoding='utf-8')

            self.logger.info(f"CSV exported: {filepath}")
            self.written.append(str(filepath))
            return str(filepath)

        except Exception as e:
            self.logger.error(f"Error exporting to CSV: {str(e)}")
            raise

    def to_json(self, data: Any, filename: str) -> str:
        """Export data to JSON; non-finite floats are written as Infinity/NaN"""
        filepath = self.output_dir / filename

        try:
            with open(filepath, 'w', encoding='utf-8') as f:
                json.dump(data, f, indent=2, ensure_ascii=False, default=_json_default)

            self.logger.info(f"JSON exported: {filepath}")
            self.written.append(str(filepath))
            return str(filepath)

        except Exception as e:
            self.logger.error(f"Error exporting to JSON: {str(e)}")
            raise

    # -- benchmark outputs -----------------------------------------------------

    def export_run(self, record) -> str:
        """metrics_<label>_<seed>.csv for one RunRecord"""
        rows = [metrics.as_dict() for metrics in record.metrics]
        return self.to_csv(rows, f"metrics_{record.label}_{record.seed}.csv", columns=METRIC_COLUMNS)

    def export_records(self, records) -> str:
        """records.json: one outcome entry per run, without the metric arrays"""
        ledger = [record.summary() for record in sorted(records, key=lambda r: (r.label, r.seed))]
        return self.to_json(ledger, "records.json")

    def export_suite(self, suite) -> Dict[str, str]:
        """All Metric 1-3 tables of a comparison suite"""
        results = {}
        for record in suite.records:
            self.export_run(record)
        results['summary'] = self.to_csv(suite.summary, "summary.csv")
        results['early'] = self.to_csv(suite.early, "early.csv")
        results['metric3'] = self.to_csv(suite.metric3, "metric3.csv")
        results['records'] = self.export_records(suite.records)
        return results

    def export_usage(self, study) -> Dict[str, str]:
        """Threshold study: usage.csv plus Metric 1 under varying thresholds"""
        results = {}
        for record in study.records:
            self.export_run(record)
        results['usage'] = self.to_csv(study.usage, "usage.csv")
        results['usage_summary'] = self.to_csv(study.summary, "usage_summary.csv")
        results['records'] = self.export_records(study.records)
        return results

    def export_landscape(self, profiles, shapes: pd.DataFrame, layer_shapes: pd.DataFrame) -> Dict[str, str]:
        """One CSV per profile plus shapes.csv and layer_shapes.csv"""
        results = {}
        for profile in profiles:
            layer, offset = profile.param_id
            frame = pd.DataFrame({"theta": profile.sweep_values, "loss": profile.losses})
            self.to_csv(frame, f"profile_L{layer}_P{offset}.csv")
        results['shapes'] = self.to_csv(shapes, "shapes.csv")
        results['layer_shapes'] = self.to_csv(layer_shapes, "layer_shapes.csv")
        return results

    def write_manifest(self, argv: Sequence[str], started: datetime, config_hash: str,
                       extra: Optional[Dict[str, Any]] = None) -> str:
        """manifest.json: command line, timestamps, config hash and written files"""
        manifest = {
            "command": list(argv),
            "started": started.isoformat(),
            "finished": datetime.now().isoformat(),
            "config_hash": config_hash,
            "outputs": sorted(Path(path).name for path in self.written)
        }
        if extra:
            manifest.update(extra)
        return self.to_json(manifest, "manifest.json")


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")
