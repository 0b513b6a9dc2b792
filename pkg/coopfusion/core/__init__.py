"""
Core functionality for collaborative 3D object fusion.

This module contains the domain types, box geometry, linear assignment,
CSBA-3D association, WLS-3D fusion, baseline late-fusion methods, the
pseudo-collaborative data generator and the evaluation metrics.
"""
