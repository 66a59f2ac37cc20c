"""
Central configuration.

Process-wide settings come from environment variables with sensible
defaults. Solver and experiment parameters are pydantic models so that
values read from a config file are validated in one place.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


@dataclass(frozen=True)
class Settings:
    log_level: str = os.getenv("LOG_LEVEL", "INFO")
    env: str = os.getenv("APP_ENV", "development")
    output_dir: str = os.getenv("MTC_OUTPUT_DIR", "runs")
    default_seed: int = int(os.getenv("MTC_DEFAULT_SEED", "7"))
    min_mode_size: int = int(os.getenv("MTC_MIN_MODE_SIZE", "16"))


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Singleton settings instance."""
    return Settings()


# ── Solver ─────────────────────────────────────────────────────────────

class SolverConfig(BaseModel):
    """Coupled-ALS and multiresolution parameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    rank: int = Field(10, ge=1)
    coarse_level_iters: int = Field(20, ge=0)
    fine_level_iters: int = Field(200, ge=0)
    # Jacobi stage length; 0 disables stage 1
    stage1_iters: int = Field(5, ge=0)
    jacobi_rounds: int = Field(5, ge=1)
    jacobi_weight: float = Field(0.7, gt=0.0, le=1.0)
    # lower w per solve when w would make the Jacobi sweep diverge
    jacobi_damping: bool = True
    diag_epsilon: float = Field(1e-5, gt=0.0)
    lambda_decay: float = Field(20.0, gt=0.0)
    tolerance: float = Field(1e-6, ge=0.0)
    min_mode_size: int = Field(default_factory=lambda: get_settings().min_mode_size, ge=2)
    seed: int = Field(default_factory=lambda: get_settings().default_seed, ge=0)
    diagnostics: bool = False
    record_timing: bool = False

    def without_multiresolution(self) -> SolverConfig:
        """Depth-0 hierarchy: solve the fine problem from a random start."""
        return self.model_copy(update={"min_mode_size": 2**31})

    def without_stage1(self) -> SolverConfig:
        """Cholesky from the first iteration."""
        return self.model_copy(update={"stage1_iters": 0})


# ── Experiments ────────────────────────────────────────────────────────

ExperimentMode = Literal["complete", "synth", "eval", "forecast"]
Baseline = Literal["oracle_cpd", "cpc_als"]


class ExperimentConfig(BaseModel):
    """One CLI run, read from a flat `key = value` file."""

    model_config = ConfigDict(extra="forbid")

    mode: ExperimentMode
    seed: int = Field(default_factory=lambda: get_settings().default_seed, ge=0)
    output: Path = Field(default_factory=lambda: Path(get_settings().output_dir))
    solver: SolverConfig = Field(default_factory=SolverConfig)

    # synth
    mode_size: int = Field(125, ge=2)
    coarse_size: int = Field(12, ge=1)
    observed_fraction: float = Field(0.03, gt=0.0, le=1.0)
    coarse_modes: list[int] = Field(default_factory=lambda: [1, 2])
    known_modes: list[int] = Field(default_factory=lambda: [2])
    baselines: list[Baseline] = Field(default_factory=list)

    # complete
    observations: Optional[Path] = None
    coarse: dict[int, Path] = Field(default_factory=dict)
    aggregation: dict[int, Path] = Field(default_factory=dict)
    kinds: list[Literal["continuous", "categorical"]] = Field(
        default_factory=lambda: ["categorical", "continuous", "continuous"],
        min_length=3,
        max_length=3,
    )
    weights: dict[int, float] = Field(default_factory=dict)
    ground_truth: Optional[Path] = None

    # eval / forecast
    factors: Optional[Path] = None
    future: Optional[Path] = None
    horizon: int = Field(7, ge=1)
    length_scale: float = Field(10.0, gt=0.0)
    noise: float = Field(1e-4, ge=0.0)

    @field_validator("coarse_modes", "known_modes")
    @classmethod
    def _modes_in_range(cls, v: list[int]) -> list[int]:
        bad = [m for m in v if m not in (1, 2, 3)]
        if bad:
            raise ValueError(f"modes must be 1, 2 or 3, got {bad}")
        return sorted(set(v))

    @field_validator("coarse", "aggregation", "weights")
    @classmethod
    def _keys_are_modes(cls, v: dict) -> dict:
        bad = [m for m in v if m not in (1, 2, 3)]
        if bad:
            raise ValueError(f"per-mode keys must be 1, 2 or 3, got {bad}")
        return v

    @model_validator(mode="after")
    def _check_inputs(self) -> ExperimentConfig:
        required: dict[str, tuple[str, ...]] = {
            "complete": ("observations",),
            "eval": ("factors", "ground_truth"),
            "forecast": ("factors",),
            "synth": (),
        }
        for name in required[self.mode]:
            if getattr(self, name) is None:
                raise ValueError(f"mode {self.mode} needs '{name}'")

        paths = [self.observations, self.ground_truth, self.factors, self.future]
        paths += list(self.coarse.values()) + list(self.aggregation.values())
        for path in paths:
            if path is not None and not path.is_file():
                raise ValueError(f"input file not found: {path}")

        if self.mode == "synth":
            if self.coarse_size >= self.mode_size:
                raise ValueError("coarse_size must be smaller than mode_size")
            if not set(self.known_modes) <= set(self.coarse_modes):
                raise ValueError("known_modes must be a subset of coarse_modes")
        for mode in self.aggregation:
            if mode not in self.coarse:
                raise ValueError(f"aggregation for mode {mode} given without a coarse tensor")
        return self
