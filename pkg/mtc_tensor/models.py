"""
Pydantic models for solver reports and run summaries.
These are pure data objects: no numerical state.
"""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field, model_validator


class SolveRecord(BaseModel):
    """One ALS iteration at one resolution level (level 0 is the coarsest)."""

    level: int = Field(..., ge=0)
    iteration: int = Field(..., ge=1)
    lam: float = Field(..., ge=0.0)
    observed_loss: float
    coarse_loss: float
    pof: Optional[float] = None
    jacobi_radius: Optional[float] = None
    seconds: float = 0.0


class SolveReport(BaseModel):
    model: str = "mtc"
    records: list[SolveRecord] = Field(default_factory=list)

    @model_validator(mode="after")
    def _iterations_increase(self) -> SolveReport:
        last: dict[int, int] = {}
        for rec in self.records:
            if rec.iteration <= last.get(rec.level, 0):
                raise ValueError(f"iterations must increase within level {rec.level}")
            last[rec.level] = rec.iteration
        return self

    def append(self, record: SolveRecord) -> None:
        last = max((r.iteration for r in self.for_level(record.level)), default=0)
        if record.iteration <= last:
            raise ValueError(f"iterations must increase within level {record.level}")
        self.records.append(record)

    def for_level(self, level: int) -> list[SolveRecord]:
        return [r for r in self.records if r.level == level]

    @property
    def final_pof(self) -> Optional[float]:
        return self.records[-1].pof if self.records else None


class RunSummary(BaseModel):
    model: str
    pof: Optional[float] = None
    iterations: int = 0
    seconds: float = 0.0
