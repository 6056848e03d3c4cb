"""
Configuration management for the certification toolkit.

Process settings come from the environment through pydantic-settings; the
numerical knobs of the ellipsoid solver and the reach search are plain
pydantic models so scenarios can embed and validate them.

Author: Dr. Elena Voss
Date: 2024-02-05
"""

import logging
import sys
from typing import Literal

import structlog
from pydantic import BaseModel, Field, model_validator
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Process-wide settings with environment variable support.

    Only log verbosity and rendering are taken from the environment; every
    numerical parameter lives in the scenario document.

    Example .env file:
        REJUVENATION_LOG_LEVEL=DEBUG
        REJUVENATION_LOG_FORMAT=console
    """

    APP_NAME: str = "Safe Rejuvenation Toolkit"
    VERSION: str = "1.0.1"

    LOG_LEVEL: str = Field(default="WARNING", description="Root log level")
    LOG_FORMAT: Literal["json", "console"] = Field(
        default="json",
        description="structlog renderer used on stderr"
    )

    model_config = {
        "env_file": ".env",
        "env_prefix": "REJUVENATION_",
        "case_sensitive": True,
        "extra": "ignore",
    }


class SolverOptions(BaseModel):
    """Options of the log-det barrier solver.

    Attributes:
        max_iter: Cap on the total number of damped Newton steps
        rel_gap: Duality-gap style stopping tolerance on log det Q
        barrier_mu: Multiplier applied to the barrier weight per outer round
        tol_feas: Face slack barrier iterates must keep, and the tolerance of
            the face and LMI check on the rescaled result
        decay_fraction: Fraction of the closed-loop stability margin reserved
            as a guaranteed decay rate (0 keeps the plain invariance LMI)
    """

    max_iter: int = Field(default=500, ge=1)
    rel_gap: float = Field(default=1e-3, gt=0.0, lt=1.0)
    barrier_mu: float = Field(default=10.0, gt=1.0)
    tol_feas: float = Field(default=1e-8, gt=0.0, lt=0.5)
    decay_fraction: float = Field(default=0.0, ge=0.0, lt=1.0)


class ReachOptions(BaseModel):
    """Options of the uncertain-control period search."""

    grid_step: float = Field(default=0.01, gt=0.0)
    t_max: float = Field(default=10.0, gt=0.0)
    quad_divisions: int = Field(default=10, ge=2)
    richardson_rtol: float = Field(default=1e-6, gt=0.0)
    max_refinements: int = Field(default=4, ge=0)
    containment_tol: float = Field(default=1e-12, ge=0.0)
    margin_steps: int = Field(default=0, ge=0)
    frame: Literal["axis", "lyapunov"] = "axis"
    norm_cap: float = Field(default=50.0, gt=0.0)

    @model_validator(mode="after")
    def _grid_below_horizon(self) -> "ReachOptions":
        if self.grid_step > self.t_max:
            raise ValueError("grid_step must not exceed t_max")
        return self

    @property
    def quad_step(self) -> float:
        return self.grid_step / self.quad_divisions


def configure_logging(level: str = "WARNING", fmt: str = "json") -> None:
    """Configure structlog on top of the stdlib logging module.

    Args:
        level: Log level name, e.g. ``"INFO"``
        fmt: ``"json"`` for machine-readable lines, ``"console"`` for humans
    """
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.WARNING),
        format="%(message)s",
        stream=sys.stderr,
        force=True,
    )
    renderer = (
        structlog.dev.ConsoleRenderer()
        if fmt == "console"
        else structlog.processors.JSONRenderer()
    )
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            renderer,
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )


# Global settings instance
settings = Settings()
