"""Optimized Schwarz waveform relaxation with DG time stepping.

Nonoverlapping domain decomposition for advection-diffusion-reaction
problems with discontinuous coefficients.  Each subdomain is advanced
over a whole time window with a discontinuous-Galerkin (degree 0 or 1)
time discretization and P1 finite elements in space; interface data is
exchanged through Robin or Order-2 (Ventcell) transmission operators,
with L2 projection between nonconforming time grids and a mortar flux
formulation for nonmatching space grids on flat interfaces.
"""

from oswr.problem import (
    CoefficientExpression,
    ExperimentConfig,
    SubdomainSpec,
    TransmissionParams,
    parse_config,
    parse_expression,
    serialize_config,
    validate_problem,
)

__all__ = [
    "CoefficientExpression",
    "ExperimentConfig",
    "SubdomainSpec",
    "TransmissionParams",
    "parse_config",
    "parse_expression",
    "serialize_config",
    "validate_problem",
]

__version__ = "0.1.0"
