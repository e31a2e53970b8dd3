"""
Artifact Writer for Run Results
Writes summary.json and CSV artifacts of a run and reads them back
"""

import json
import logging
import math
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np
import pandas as pd

from steklov_design_core.exceptions import ConfigurationError
from steklov_design_core.mesh import PolarField, PolarGrid
from steklov_design_core.modular import DesignDensity, NodalField

logger = logging.getLogger(__name__)

TIMESTAMP_FIELD = "generated_at"


def to_jsonable(value: Any) -> Any:
    """Plain JSON types; non-finite floats become the strings "inf", "-inf" and "nan"."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, pd.DataFrame):
        return to_jsonable(value.to_dict(orient="list"))
    return value


class ArtifactWriter:
    """Output directory of one run."""

    def __init__(self, out_dir: Union[str, Path], float_format: str = "%.17g",
                 summary_file: str = "summary.json"):
        self.out_dir = Path(out_dir)
        self.float_format = float_format
        self.summary_file = summary_file
        self.artifacts: List[str] = []
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigurationError(f"Cannot create output directory {self.out_dir}: {exc}") from exc

    def write_frame(self, name: str, frame: pd.DataFrame) -> Path:
        path = self.out_dir / f"{name}.csv"
        frame.to_csv(path, index=False, float_format=self.float_format)
        self.artifacts.append(path.name)
        logger.debug(f"Wrote {path} ({len(frame)} rows)")
        return path

    def write_field(self, name: str, u: NodalField) -> Path:
        return self.write_frame(name, u.to_frame())

    def write_density(self, name: str, phi: DesignDensity) -> Path:
        return self.write_frame(name, phi.to_frame())

    def write_polar(self, name: str, field: PolarField) -> Path:
        return self.write_frame(name, field.to_frame())

    def write_summary(self, summary: Dict[str, Any]) -> Path:
        """Sorted-key JSON; the artifact list and a timestamp are added."""
        document = to_jsonable(summary)
        document["artifacts"] = sorted(self.artifacts)
        document[TIMESTAMP_FIELD] = datetime.now().isoformat()
        path = self.out_dir / self.summary_file
        path.write_text(json.dumps(document, sort_keys=True, indent=2) + "\n")
        logger.info(f"Summary written to {path}")
        return path

    def read_summary(self) -> Dict[str, Any]:
        return json.loads((self.out_dir / self.summary_file).read_text())

    def read_frame(self, name: str) -> pd.DataFrame:
        return pd.read_csv(self.out_dir / f"{name}.csv")

    def read_field(self, name: str) -> NodalField:
        return NodalField.from_frame(self.read_frame(name))

    def read_density(self, name: str) -> DesignDensity:
        return DesignDensity.from_frame(self.read_frame(name))

    def read_polar(self, name: str, grid: PolarGrid) -> PolarField:
        return PolarField.from_frame(grid, self.read_frame(name))


def strip_timestamp(summary: Dict[str, Any]) -> Dict[str, Any]:
    """Summary without its timestamp, for run-to-run comparison."""
    return {k: v for k, v in summary.items() if k != TIMESTAMP_FIELD}
