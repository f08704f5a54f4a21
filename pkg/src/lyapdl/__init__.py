"""lyapdl: a mini deduction system for Lyapunov stability proofs of damped
linearly-controlled inverted pendula, with an arithmetic witness oracle,
simulation-based model validation, and an interactive proof service."""

__version__ = "0.1.0"
