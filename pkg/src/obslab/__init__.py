"""obslab: obstacle-problem solvers and free-boundary diagnostics."""

__version__ = "0.1.0"
