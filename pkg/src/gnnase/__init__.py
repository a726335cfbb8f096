"""Fault diagnosis toolkit for three-phase induction machines.

Synthesizes physics-grounded fault recordings, extracts window features,
builds per-recording signal graphs, and trains the GNN-ASE model (graph
convolution + dynamic edge reweighting + anomaly/severity/type heads).
"""

__version__ = "0.1.0"
