from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ReturnSeries:
    """Uniformly spaced observations (returns, activity counts, windowed X).

    ``dt`` is the sampling step expressed in ``unit``; spectra computed from
    the series carry frequencies in cycles per ``unit``.
    """

    values: np.ndarray
    dt: float = 1.0
    unit: str = "step"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("values must be one-dimensional")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.size) * self.dt

    def with_values(self, values, **meta) -> "ReturnSeries":
        return ReturnSeries(values, self.dt, self.unit, {**self.meta, **meta})
