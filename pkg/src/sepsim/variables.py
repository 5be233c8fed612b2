"""Physiological variable definitions and the default ICU panel."""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from typing import Optional, Sequence

__all__ = ["VariableSpec", "DEFAULT_VARIABLES", "default_specs",
           "specs_to_json", "specs_from_json", "spec_index"]


@dataclass(frozen=True)
class VariableSpec:
    """One dynamic indicator: identity, units, and admissible ranges.

    ``plausible_range`` is the hard physical envelope used for outlier
    cleaning; ``normal_range`` is the clinically unremarkable band used for
    imputation midpoints and post-processing review. ``warn_threshold`` (with
    ``warn_direction``) drives prompt alerts; ``deterioration_direction``
    tells the synthetic generator which way the variable moves toward onset.
    """

    name: str
    unit: str
    normal_range: tuple[float, float]
    plausible_range: tuple[float, float]
    warn_threshold: Optional[float] = None
    warn_direction: Optional[str] = None  # "above" | "below"
    deterioration_direction: str = "none"  # "rises" | "falls" | "none"

    def __post_init__(self):
        n_lo, n_hi = self.normal_range
        p_lo, p_hi = self.plausible_range
        if not (n_lo < n_hi and p_lo < p_hi):
            raise ValueError(f"{self.name}: ranges must have lo < hi")
        if not (p_lo <= n_lo and n_hi <= p_hi):
            raise ValueError(f"{self.name}: plausible_range must contain normal_range")
        if (self.warn_threshold is None) != (self.warn_direction is None):
            raise ValueError(f"{self.name}: warn threshold and direction go together")
        if self.warn_direction not in (None, "above", "below"):
            raise ValueError(f"{self.name}: bad warn_direction {self.warn_direction}")
        if self.deterioration_direction not in ("rises", "falls", "none"):
            raise ValueError(f"{self.name}: bad deterioration_direction")

    @property
    def normal_midpoint(self) -> float:
        lo, hi = self.normal_range
        return 0.5 * (lo + hi)

    @property
    def display(self) -> str:
        return _DISPLAY_OVERRIDES.get(self.name, self.name.replace("_", " "))


_DISPLAY_OVERRIDES = {
    "sbp": "systolic pressure",
    "dbp": "diastolic pressure",
    "map": "mean pressure",
    "spo2": "oxygen saturation",
    "gcs": "coma scale",
    "wbc": "white cells",
    "fio2": "inspired oxygen",
    "bun": "urea nitrogen",
    "pao2": "arterial oxygen",
    "paco2": "arterial co2",
    "band_pct": "band percentage",
    "resp_rate": "respiratory rate",
}

# Default 20-variable panel. Warn thresholds sit at common bedside alert
# levels; deterioration directions describe the typical pre-septic course.
DEFAULT_VARIABLES: tuple[VariableSpec, ...] = (
    VariableSpec("heart_rate", "bpm", (60, 100), (20, 250), 100, "above", "rises"),
    VariableSpec("sbp", "mmHg", (95, 140), (40, 280), 100, "below", "falls"),
    VariableSpec("dbp", "mmHg", (55, 85), (20, 150), 45, "below", "falls"),
    VariableSpec("map", "mmHg", (70, 105), (30, 180), 65, "below", "falls"),
    VariableSpec("resp_rate", "breaths/min", (12, 20), (4, 60), 22, "above", "rises"),
    VariableSpec("spo2", "%", (94, 100), (50, 100), 92, "below", "falls"),
    VariableSpec("temperature", "degC", (36.2, 37.7), (30, 43), 38.0, "above", "rises"),
    VariableSpec("glucose", "mg/dL", (70, 140), (20, 1000), 180, "above", "rises"),
    VariableSpec("gcs", "score", (14, 15), (3, 15), 13, "below", "falls"),
    VariableSpec("wbc", "10^3/uL", (4, 12), (0.1, 100), 12, "above", "rises"),
    VariableSpec("bilirubin", "mg/dL", (0.2, 1.2), (0.05, 40), 1.5, "above", "rises"),
    VariableSpec("platelets", "10^3/uL", (150, 400), (5, 1500), 120, "below", "falls"),
    VariableSpec("lactate", "mmol/L", (0.5, 2.0), (0.2, 25), 2.0, "above", "rises"),
    VariableSpec("fio2", "fraction", (0.20, 0.22), (0.15, 1.0), 0.5, "above", "none"),
    VariableSpec("bun", "mg/dL", (7, 20), (2, 150), 25, "above", "rises"),
    VariableSpec("pao2", "mmHg", (90, 110), (30, 600), 70, "below", "none"),
    VariableSpec("creatinine", "mg/dL", (0.6, 1.2), (0.1, 20), 1.5, "above", "rises"),
    VariableSpec("urine_output", "mL/h", (30, 100), (0, 1000), 20, "below", "falls"),
    VariableSpec("paco2", "mmHg", (35, 45), (10, 130), 32, "below", "falls"),
    VariableSpec("band_pct", "%", (0, 5), (0, 50), 10, "above", "rises"),
)


def default_specs() -> list[VariableSpec]:
    return list(DEFAULT_VARIABLES)


def spec_index(specs: Sequence[VariableSpec]) -> dict[str, int]:
    return {s.name: i for i, s in enumerate(specs)}


def specs_to_json(specs: Sequence[VariableSpec]) -> str:
    return json.dumps([asdict(s) for s in specs], indent=2)


def specs_from_json(text: str) -> list[VariableSpec]:
    raw = json.loads(text)
    specs = []
    for entry in raw:
        entry = dict(entry)
        entry["normal_range"] = tuple(entry["normal_range"])
        entry["plausible_range"] = tuple(entry["plausible_range"])
        specs.append(VariableSpec(**entry))
    return specs
