"""Dynamic hypergraph learning for hyperedge prediction (LINCOLN), CPU/numpy."""

__version__ = "0.1.0"
