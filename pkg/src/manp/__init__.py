"""Structure-preserving finite-difference / ETD solver for Maxwell-Ampere Nernst-Planck systems."""

from .grid import CellField, EdgeField, Grid, VertexField, inner_cell, inner_edge, norm_cell, norm_edge
from .physics import ModelParams, SimState, SpeciesParams

__all__ = [
    "CellField",
    "EdgeField",
    "Grid",
    "ModelParams",
    "SimState",
    "SpeciesParams",
    "VertexField",
    "inner_cell",
    "inner_edge",
    "norm_cell",
    "norm_edge",
]

__version__ = "0.1.0"
