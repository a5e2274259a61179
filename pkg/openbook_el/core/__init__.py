"""
Geometry, empirical likelihood, inference, simulation and tree ingestion.
"""
