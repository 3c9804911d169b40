"""Simulation platform for multi-agent manufacturing control: a timed
colored Petri-net shop-floor simulator, an agent-based execution layer and
the XML hybrid-agent bridge between them."""

__version__ = "0.1.0"
