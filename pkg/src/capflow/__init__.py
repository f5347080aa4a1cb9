"""capflow: microvascular blood-flow workbench.

Synthetic capillary network generation, full-order Poiseuille solvers
(constant and hematocrit-dependent rheology), and physics-informed
graph-network surrogates with a small self-contained training stack.
"""

from .graph import (BoundaryConditions, NodeClassification, VascularGraph,
                    build_incidence, classify_nodes,
                    detect_boundaries_by_diameter)
from .linear import LinearSystem, assemble_linear, solve_linear
from .netgen import GeneratorConfig, generate_network, rescale_to_sv
from .nonlinear import FixedPointConfig, solve_nonlinear
from .rheology import RheologyParams, blood_viscosity, edge_resistance, \
    velocity_from_flow
from .solution import FlowSolution

__version__ = "0.1.0"

__all__ = [
    "BoundaryConditions", "NodeClassification", "VascularGraph",
    "build_incidence", "classify_nodes", "detect_boundaries_by_diameter",
    "LinearSystem", "assemble_linear", "solve_linear",
    "GeneratorConfig", "generate_network", "rescale_to_sv",
    "FixedPointConfig", "solve_nonlinear",
    "RheologyParams", "blood_viscosity", "edge_resistance",
    "velocity_from_flow", "FlowSolution",
    "__version__",
]
