"""Experiment record type shared by fitting, analysis and the CSV layer."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .errors import DomainError

DATA_UNITS = ("graphs", "edges", "fraction")
METRIC_KINDS = ("error", "score")


@dataclass(frozen=True)
class ExperimentRecord:
    """One trained-model measurement.

    ``metric_kind`` travels with the value so that error forms are never fitted
    to accuracies or vice versa.
    """

    n_params: float
    data_size: float
    data_unit: str
    metric_kind: str
    metric_value: float
    depth: Optional[int] = None
    task: str = ""
    seed: Optional[int] = None

    def __post_init__(self):
        if self.data_unit not in DATA_UNITS:
            raise DomainError(f"data_unit must be one of {DATA_UNITS}, got {self.data_unit!r}")
        if self.metric_kind not in METRIC_KINDS:
            raise DomainError(f"metric_kind must be one of {METRIC_KINDS}, got {self.metric_kind!r}")
        for name in ("n_params", "data_size", "metric_value"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if self.n_params <= 0:
            raise DomainError(f"n_params must be > 0, got {self.n_params!r}")
        if self.data_size <= 0:
            raise DomainError(f"data_size must be > 0, got {self.data_size!r}")
        if self.data_unit == "fraction" and self.data_size > 1:
            raise DomainError(f"a fraction data_size must lie in (0, 1], got {self.data_size!r}")
        if self.metric_value < 0:
            raise DomainError(f"metric_value must be >= 0, got {self.metric_value!r}")
        if self.metric_kind == "score" and self.metric_value > 1:
            raise DomainError(f"score metric_value must be <= 1, got {self.metric_value!r}")
        if self.depth is not None and self.depth < 1:
            raise DomainError(f"depth must be >= 1, got {self.depth!r}")

    @property
    def higher_is_better(self) -> bool:
        return self.metric_kind == "score"
