"""Exception types shared across the package."""


class ConfigError(Exception):
    """Invalid or inconsistent configuration (CLI exit code 1)."""


class SolverError(RuntimeError):
    """Numerical failure inside an iterative solver."""


class TrainingError(RuntimeError):
    """Non-finite loss or other failure during energy-model training."""
