"""
gpi_morl: tabular multi-objective RL with GPI Linear Support, GPI
Prioritized Dyna and exact convex coverage set geometry.

The command-line entry point lives in ``morl.py`` at the repository root.
"""
