"""Estimator configuration."""

from typing import Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from hd_cbps.core.balance import CalibrationSettings
from hd_cbps.core.model import (
    ExponentialFamily,
    FamilyName,
    Pipeline,
    W1,
    W2,
    get_family,
    get_link,
)
from hd_cbps.core.optimize import PenaltyConfig, SolverSettings


class EstimatorConfig(BaseModel):
    """
    Configuration of the full estimation pipeline.

    Defaults follow the robust pair w1 = one, w2 = ps-adjusted, with 5-fold
    cross-validated penalties and 95% intervals.
    """
    family: str = "gaussian"
    pipeline: Optional[Pipeline] = None
    link: str = "logistic"
    w1: W1 = W1.ONE
    w2: W2 = W2.PS_ADJUSTED
    propensity_penalty: PenaltyConfig = Field(default_factory=PenaltyConfig)
    outcome_penalty: PenaltyConfig = Field(default_factory=PenaltyConfig)
    solver: SolverSettings = Field(default_factory=SolverSettings)
    calibration: CalibrationSettings = Field(default_factory=CalibrationSettings)
    level: float = Field(default=0.95, gt=0.0, lt=1.0)
    skip_initial_outcome: bool = False
    skip_outcome_refit: bool = False

    @field_validator("family")
    @classmethod
    def _parse_family(cls, value: str) -> str:
        return get_family(value).label

    @field_validator("link")
    @classmethod
    def _parse_link(cls, value: str) -> str:
        return get_link(value).name.value

    @model_validator(mode="after")
    def _check_combination(self) -> "EstimatorConfig":
        pipeline = self.resolved_pipeline
        if pipeline is Pipeline.LINEAR:
            if self.family != FamilyName.GAUSSIAN.value:
                raise ValueError("the linear pipeline requires the gaussian family")
            if self.w1 is W1.BPP:
                raise ValueError("w1 = bpp is only defined for the GLM pipeline")
            if self.skip_initial_outcome or self.skip_outcome_refit:
                raise ValueError("skip flags only apply to the GLM pipeline")
        if self.skip_initial_outcome and self.w1 is W1.BPP:
            raise ValueError("the initial outcome fit cannot be skipped when w1 = bpp")
        if self.skip_outcome_refit and self.w1 is not W1.BPP:
            raise ValueError("the outcome refit can only be skipped when w1 = bpp")
        return self

    @property
    def resolved_pipeline(self) -> Pipeline:
        if self.pipeline is not None:
            return Pipeline(self.pipeline)
        if self.family == FamilyName.GAUSSIAN.value and self.w1 is not W1.BPP:
            return Pipeline.LINEAR
        return Pipeline.GLM

    @property
    def eta(self) -> float:
        return 1.0 - self.level

    def family_instance(self) -> ExponentialFamily:
        return get_family(self.family)
