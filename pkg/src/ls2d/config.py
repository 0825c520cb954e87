"""Run configuration: one JSON document, validated with unknown keys rejected."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, field_validator

from . import discretization as disc

__all__ = ["RunConfig", "load_config", "MODES"]

MODES = ("direct", "pgmres", "compress-stats", "quad-test", "spectrum")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GaussianCfg(_Strict):
    kind: Literal["gaussian"]
    amplitude: float = 1.5
    width: PositiveFloat = 160.0


class CavityCfg(_Strict):
    kind: Literal["cavity"]


class LensCfg(_Strict):
    kind: Literal["lens"]


class BumpsCfg(_Strict):
    kind: Literal["random_bumps"]
    seed: int = 1
    count: PositiveInt = 200


class CrystalCfg(_Strict):
    kind: Literal["photonic_crystal"]
    channel: bool = True


class TabulatedCfg(_Strict):
    kind: Literal["tabulated"]
    path: str


PotentialCfg = Annotated[
    Union[GaussianCfg, CavityCfg, LensCfg, BumpsCfg, CrystalCfg, TabulatedCfg],
    Field(discriminator="kind"),
]


class IncidentCfg(_Strict):
    direction: Tuple[float, float] = (1.0, 0.0)
    offset: float = 0.0


class ProblemCfg(_Strict):
    kappa: PositiveFloat
    potential: PotentialCfg
    h: PositiveFloat
    incident: IncidentCfg = IncidentCfg()
    correction_order: int = 4
    domain: Tuple[Tuple[float, float], Tuple[float, float]] = disc.UNIT_SQUARE

    @field_validator("correction_order")
    @classmethod
    def _order(cls, v):
        if v not in (2, 4):
            raise ValueError(f"correction order {v} is not supported (use 2 for the punctured "
                             f"rule or 4 for the single-point correction)")
        return v

    @field_validator("incident")
    @classmethod
    def _unit(cls, v):
        n = (v.direction[0] ** 2 + v.direction[1] ** 2) ** 0.5
        if abs(n - 1.0) > 1e-12:
            raise ValueError("incident direction must be a unit vector")
        return v

    @field_validator("domain")
    @classmethod
    def _domain(cls, v):
        (x0, y0), (x1, y1) = v
        if not (x1 > x0 and y1 > y0):
            raise ValueError("domain must be [[x0, y0], [x1, y1]] with x1 > x0 and y1 > y0")
        return v


class GmresCfg(_Strict):
    tol: PositiveFloat = 1e-10
    maxit: PositiveInt = 100
    restart: Optional[PositiveInt] = None


class OutputCfg(_Strict):
    report: str = "report.json"
    field: Optional[str] = None      # basename for the total-field CSV/LSF2 pair
    factors: Optional[str] = None    # HBS2 container with factors and inverse


class QuadTestCfg(_Strict):
    refinements: int = Field(3, ge=3)
    tol: PositiveFloat = 1e-12


class RunConfig(_Strict):
    problem: ProblemCfg
    mode: Optional[Literal["direct", "pgmres", "compress-stats", "quad-test", "spectrum"]] = None
    eps: float = Field(1e-6, gt=0, lt=1)
    eps_pre: float = Field(1e-4, gt=0, lt=1)
    proxy_width: Optional[Literal[1, 2, 3]] = None
    leaf_size: int = Field(100, ge=4)
    gmres: GmresCfg = GmresCfg()
    output: OutputCfg = OutputCfg()
    probes: List[Tuple[float, float]] = [(0.25, 0.0), (1.0, 0.5)]
    threads: Optional[PositiveInt] = None
    quad_test: QuadTestCfg = QuadTestCfg()
    n_eigs: Optional[PositiveInt] = None
    seed: int = 0   # random probe vectors in diagnostics

    def grid(self) -> disc.UniformGrid:
        return disc.build_grid(self.problem.domain, self.problem.h)

    def potential(self, grid: disc.UniformGrid):
        p = self.problem.potential
        if isinstance(p, GaussianCfg):
            return disc.Gaussian(p.amplitude, p.width)
        if isinstance(p, CavityCfg):
            return disc.Cavity()
        if isinstance(p, LensCfg):
            return disc.Lens()
        if isinstance(p, BumpsCfg):
            return disc.RandomBumps(seed=p.seed, count=p.count, domain=self.problem.domain)
        if isinstance(p, CrystalCfg):
            return disc.PhotonicCrystal(channel=p.channel)
        return disc.Tabulated.from_file(p.path, grid)

    def problem_spec(self, grid: Optional[disc.UniformGrid] = None, order: Optional[int] = None):
        grid = grid or self.grid()
        inc = self.problem.incident
        return disc.ProblemSpec(
            kappa=self.problem.kappa,
            potential=self.potential(grid),
            grid=grid,
            incident=disc.PlaneWave(tuple(inc.direction), inc.offset),
            correction_order=order or self.problem.correction_order,
        )


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    return RunConfig.model_validate(json.loads(text))
