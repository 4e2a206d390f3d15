"""
Pydantic models and enumerations shared across lame-spectral.

This module defines the Lamé parameters, the exponent bookkeeping types, the
resolvent parameters and the EstimateReport record every experiment returns.
"""

import math
from enum import Enum
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator


class Space(str, Enum):
    """Which side of the Fourier transform a field lives on."""

    PHYSICAL = "physical"
    FREQUENCY = "frequency"

    @property
    def flag(self) -> int:
        """Space flag used by the binary snapshot header."""
        return 0 if self is Space.PHYSICAL else 1

    @classmethod
    def from_flag(cls, flag: int) -> "Space":
        if flag == 0:
            return cls.PHYSICAL
        if flag == 1:
            return cls.FREQUENCY
        raise ValueError(f"Unknown space flag: {flag}")


class SignBranch(str, Enum):
    """Hemisphere cap index; the pole is +e1 for plus and -e1 for minus."""

    PLUS = "plus"
    MINUS = "minus"

    @property
    def sign(self) -> float:
        return 1.0 if self is SignBranch.PLUS else -1.0

    def pole(self, n: int) -> list[float]:
        """Return the pole ±e1 in dimension n."""
        return [self.sign] + [0.0] * (n - 1)


class PairClass(str, Enum):
    """Classification of a Lebesgue exponent pair (q, r)."""

    SHARP_ADMISSIBLE = "sharp_admissible"
    ADMISSIBLE = "admissible"
    ACCEPTABLE_ONLY = "acceptable_only"
    NOT_ACCEPTABLE = "not_acceptable"


class Verdict(str, Enum):
    """Outcome of an experiment against its tolerances."""

    PASS = "pass"
    FAIL = "fail"


class LameParams(BaseModel):
    """Lamé constants with the derived P and S wave speeds."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    lam: float = Field(..., alias="lambda", description="First Lamé constant")
    mu: float = Field(..., description="Shear modulus")

    @model_validator(mode="after")
    def _check_ellipticity(self) -> "LameParams":
        if not (math.isfinite(self.lam) and math.isfinite(self.mu)):
            raise ValueError("Lamé constants must be finite")
        if self.mu <= 0 or self.lam + 2 * self.mu <= 0:
            raise ValueError(
                f"Ellipticity requires mu > 0 and lambda + 2 mu > 0, "
                f"got lambda={self.lam}, mu={self.mu}"
            )
        return self

    @property
    def c_p(self) -> float:
        """P-wave speed sqrt(lambda + 2 mu)."""
        return math.sqrt(self.lam + 2 * self.mu)

    @property
    def c_s(self) -> float:
        """S-wave speed sqrt(mu)."""
        return math.sqrt(self.mu)

    @property
    def max_speed(self) -> float:
        return max(self.c_p, self.c_s)


class ResolventParams(BaseModel):
    """Damping coefficient a and spectral parameter z of the resolvent."""

    model_config = ConfigDict(frozen=True)

    a: complex = Field(default=0j, description="Coefficient of the first time derivative")
    z: complex = Field(..., description="Spectral parameter")


def _reciprocal(value: float) -> float:
    return 0.0 if math.isinf(value) else 1.0 / value


class ExponentTuple(BaseModel):
    """Lebesgue and Sobolev exponents of one estimate."""

    model_config = ConfigDict(frozen=True, ser_json_inf_nan="constants")

    n: int = Field(..., ge=2, description="Spatial dimension")
    q: float = Field(..., description="Time exponent")
    r: float = Field(..., description="Space exponent")
    q_dual: float | None = Field(None, description="Dual time exponent q~")
    r_dual: float | None = Field(None, description="Dual space exponent r~")

    @model_validator(mode="after")
    def _check_range(self) -> "ExponentTuple":
        for name in ("q", "r", "q_dual", "r_dual"):
            value = getattr(self, name)
            if value is not None and not value >= 1:
                raise ValueError(f"Exponent {name}={value} outside [1, inf]")
        return self

    @computed_field  # type: ignore[prop-decorator]
    @property
    def s(self) -> float:
        """Sobolev index from 1/q + n/r = n/2 - s."""
        return self.n / 2 - _reciprocal(self.q) - self.n * _reciprocal(self.r)

    @computed_field  # type: ignore[prop-decorator]
    @property
    def sigma(self) -> float:
        """Regularity index 1/q + n/r - (n-1)/2 of the perturbed estimate."""
        return _reciprocal(self.q) + self.n * _reciprocal(self.r) - (self.n - 1) / 2


class InhomogeneousCheck(BaseModel):
    """Structured result of the inhomogeneous Strichartz conditions."""

    ok: bool = Field(..., description="Whether every condition holds")
    reasons: list[str] = Field(default_factory=list, description="Failed conditions")
    midpoint: tuple[float, float] = Field(..., description="(1/q*, 1/r*) midpoint")
    midpoint_sharp: bool = Field(..., description="Whether the midpoint is sharp-admissible")


class PicardTrace(BaseModel):
    """Per-iteration residuals of the Duhamel fixed-point iteration."""

    residuals: list[float] = Field(default_factory=list, description="Relative changes")
    converged: bool = Field(default=False, description="Tolerance reached")
    tolerance: float = Field(..., description="Stopping tolerance")

    @property
    def iterations(self) -> int:
        return len(self.residuals)

    @property
    def ratios(self) -> list[float]:
        """Successive residual ratios r_k / r_(k-1)."""
        return [
            b / a if a > 0 else 0.0
            for a, b in zip(self.residuals, self.residuals[1:], strict=False)
        ]

    @property
    def geometric_ratio(self) -> float:
        """Largest observed contraction ratio (0 for fewer than two residuals)."""
        ratios = self.ratios
        return max(ratios) if ratios else 0.0


class Sample(BaseModel):
    """One measured value with the inputs that produced it."""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    descriptor: dict[str, float | int | str] = Field(..., description="Input descriptor")
    value: float = Field(..., description="Measured value")


class EstimateReport(BaseModel):
    """Structured record of a verification experiment."""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    experiment_id: str = Field(..., description="Experiment identifier")
    parameters: dict[str, Any] = Field(default_factory=dict, description="Echoed inputs")
    samples: list[Sample] = Field(default_factory=list, description="Measured samples")
    statistics: dict[str, float] = Field(default_factory=dict, description="Derived statistics")
    tolerances: dict[str, float] = Field(default_factory=dict, description="Configured tolerances")
    checks: dict[str, bool] = Field(default_factory=dict, description="Named pass conditions")
    verdict: Verdict = Field(..., description="Pass when every check holds")
    provenance: str = Field(default="", description="Config hash")
    notes: list[str] = Field(default_factory=list, description="Diagnostics")

    @classmethod
    def from_checks(
        cls,
        experiment_id: str,
        checks: dict[str, bool],
        samples: list[Sample] | None = None,
        statistics: dict[str, float] | None = None,
        tolerances: dict[str, float] | None = None,
        parameters: dict[str, Any] | None = None,
        notes: list[str] | None = None,
    ) -> "EstimateReport":
        """Create a report whose verdict is the conjunction of its checks."""
        return cls(
            experiment_id=experiment_id,
            parameters=parameters or {},
            samples=samples or [],
            statistics=statistics or {},
            tolerances=tolerances or {},
            checks=checks,
            verdict=Verdict.PASS if all(checks.values()) else Verdict.FAIL,
            notes=notes or [],
        )

    @property
    def passed(self) -> bool:
        return self.verdict is Verdict.PASS

    def values(self) -> list[float]:
        return [sample.value for sample in self.samples]
