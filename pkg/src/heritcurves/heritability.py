"""Classical moment estimators of variance components and their local versions.

The classical estimators map relative-pair correlations to the proportions
``a2`` (additive genetic), ``c2`` (common environment), ``d2`` (dominance) and
``e2`` (residual environment).  Feeding correlation curves instead of global
correlations into the same formulas yields heritability curves.

No clamping is applied anywhere: moment estimators may leave [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .mixture import (
    TrioMixture,
    TwinJointModel,
    correlation_curve,
    global_moments,
    trio_pair_margin,
)

TWIN_ACE = "twin-ACE"
TWIN_ADE = "twin-ADE"
TRIO_ACE = "trio-ACE"
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class ClassicalDecomposition:
    """Variance proportions; the inactive one of ``c2``/``d2`` is zero."""

    a2: float
    c2: float
    d2: float
    e2: float
    design: str

    @property
    def total(self) -> float:
        return self.a2 + self.c2 + self.d2 + self.e2

    @property
    def broad_sense(self) -> float:
        return self.a2 + self.d2

    @property
    def environment(self) -> float:
        """Total environmental share ``c2 + e2``."""
        return self.c2 + self.e2


def falconer_ace(rho_mz: float, rho_dz: float) -> ClassicalDecomposition:
    """Falconer's ACE estimates from MZ and DZ correlations."""
    return ClassicalDecomposition(
        a2=2.0 * (rho_mz - rho_dz),
        c2=2.0 * rho_dz - rho_mz,
        d2=0.0,
        e2=1.0 - rho_mz,
        design=TWIN_ACE,
    )


def ade_moments(rho_mz: float, rho_dz: float) -> ClassicalDecomposition:
    """ADE moment estimates from MZ and DZ correlations."""
    return ClassicalDecomposition(
        a2=4.0 * rho_dz - rho_mz,
        c2=0.0,
        d2=2.0 * (rho_mz - 2.0 * rho_dz),
        e2=1.0 - rho_mz,
        design=TWIN_ADE,
    )


def trio_ace(rho_mc: float, rho_fc: float) -> ClassicalDecomposition:
    """ACE estimates from mother-child and father-child correlations.

    Mother and child share environment, father and child do not, and the
    parents are taken as uncorrelated.
    """
    return ClassicalDecomposition(
        a2=2.0 * rho_fc,
        c2=rho_mc - rho_fc,
        d2=0.0,
        e2=1.0 - rho_mc - rho_fc,
        design=TRIO_ACE,
    )


class ModelChoice(NamedTuple):
    design: str
    # True when rho_mz == 2 rho_dz, where ACE and ADE give the same answer
    boundary: bool


def model_choice(rho_mz: float, rho_dz: float) -> ModelChoice:
    """ACE if ``rho_mz < 2 rho_dz``, otherwise ADE."""
    gap = rho_mz - 2.0 * rho_dz
    if abs(gap) <= _TIE_TOL:
        return ModelChoice(TWIN_ACE, True)
    return ModelChoice(TWIN_ACE if gap < 0 else TWIN_ADE, False)


@dataclass
class HeritabilityCurves:
    """Pointwise variance proportions on a grid of trait values.

    ``rho`` holds the correlation curves the proportions were built from.
    With pointwise switching, ``local_design`` records the design used at
    each grid point.  ``se`` is filled in by the estimation module.
    """

    grid: np.ndarray
    design: str
    a2: np.ndarray
    e2: np.ndarray
    c2: np.ndarray | None = None
    d2: np.ndarray | None = None
    rho: dict[str, np.ndarray] = field(default_factory=dict)
    local_design: np.ndarray | None = None
    se: dict[str, np.ndarray] = field(default_factory=dict)

    def curves(self) -> dict[str, np.ndarray]:
        """Active proportion curves keyed by name."""
        out = {"a2": self.a2}
        if self.c2 is not None:
            out["c2"] = self.c2
        if self.d2 is not None:
            out["d2"] = self.d2
        out["e2"] = self.e2
        return out

    @property
    def total(self) -> np.ndarray:
        return sum(self.curves().values())

    @property
    def negative(self) -> dict[str, bool]:
        """Which curves dip below zero somewhere on the grid."""
        return {k: bool(np.any(v < 0)) for k, v in self.curves().items()}


def _check_grid(grid):
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValueError("empty grid")
    return grid


def _resolve_twin_design(model: TwinJointModel, design: str) -> str:
    design = design.lower()
    if design in ("auto", ""):
        g = global_moments(model).rho
        return model_choice(g["MZ"], g["DZ"]).design
    if design in ("ace", TWIN_ACE.lower()):
        return TWIN_ACE
    if design in ("ade", TWIN_ADE.lower()):
        return TWIN_ADE
    raise ValueError(f"unknown twin design {design!r}; use 'ace', 'ade' or 'auto'")


def heritability_curves_twins(
    model: TwinJointModel, grid, design: str = "auto", pointwise_switch: bool = False
) -> HeritabilityCurves:
    """Local ACE or ADE decomposition from MZ and DZ correlation curves.

    ``design="auto"`` picks the design once from the global correlations.
    With ``pointwise_switch=True`` the ACE/ADE choice is instead made at every
    grid point from the local correlations; both ``c2`` and ``d2`` are then
    reported, each zero where the other design is in force.
    """
    grid = _check_grid(grid)
    r_mz = correlation_curve(model.bivariate("MZ"), grid)
    r_dz = correlation_curve(model.bivariate("DZ"), grid)
    rho = {"MZ": r_mz, "DZ": r_dz}
    e2 = 1.0 - r_mz

    if pointwise_switch:
        use_ace = r_mz - 2.0 * r_dz <= _TIE_TOL
        a2 = np.where(use_ace, 2.0 * (r_mz - r_dz), 4.0 * r_dz - r_mz)
        c2 = np.where(use_ace, 2.0 * r_dz - r_mz, 0.0)
        d2 = np.where(use_ace, 0.0, 2.0 * (r_mz - 2.0 * r_dz))
        local = np.where(use_ace, TWIN_ACE, TWIN_ADE)
        return HeritabilityCurves(grid, "pointwise", a2, e2, c2=c2, d2=d2, rho=rho, local_design=local)

    chosen = _resolve_twin_design(model, design)
    if chosen == TWIN_ACE:
        return HeritabilityCurves(
            grid, chosen, 2.0 * (r_mz - r_dz), e2, c2=2.0 * r_dz - r_mz, rho=rho
        )
    return HeritabilityCurves(
        grid, chosen, 4.0 * r_dz - r_mz, e2, d2=2.0 * (r_mz - 2.0 * r_dz), rho=rho
    )


def heritability_curves_trio(model: TrioMixture, grid) -> HeritabilityCurves:
    """Local trio ACE decomposition from the MC and FC correlation curves."""
    grid = _check_grid(grid)
    r_mc = correlation_curve(trio_pair_margin(model, "MC"), grid)
    r_fc = correlation_curve(trio_pair_margin(model, "FC"), grid)
    return HeritabilityCurves(
        grid,
        TRIO_ACE,
        a2=2.0 * r_fc,
        e2=1.0 - r_mc - r_fc,
        c2=r_mc - r_fc,
        rho={"MC": r_mc, "FC": r_fc},
    )


def heritability_curves(model, grid, design: str = "auto", pointwise_switch: bool = False):
    """Dispatch on model type."""
    if isinstance(model, TrioMixture):
        return heritability_curves_trio(model, grid)
    if isinstance(model, TwinJointModel):
        return heritability_curves_twins(model, grid, design, pointwise_switch)
    raise TypeError(f"heritability curves need a twin or trio model, got {type(model).__name__}")


def classical_decomposition(model, design: str = "auto") -> ClassicalDecomposition:
    """The classical decomposition from a model's global correlations."""
    g = global_moments(model).rho
    if isinstance(model, TrioMixture):
        return trio_ace(g["MC"], g["FC"])
    chosen = _resolve_twin_design(model, design)
    f = falconer_ace if chosen == TWIN_ACE else ade_moments
    return f(g["MZ"], g["DZ"])
