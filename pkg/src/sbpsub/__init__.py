"""Energy-stable SBP-SAT subgridding for 2-D TM FDTD."""

__version__ = "0.1.0"
