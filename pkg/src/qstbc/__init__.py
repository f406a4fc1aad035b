"""Quasi-orthogonal space-time block codes for 2^n transmit antennas.

Modules
-------
specfun   special functions and goodness-of-fit helpers
codec     code construction, PSK constellations, precoding
channel   channel sampling, stacked channel, decoupling
eigen     constant eigenvectors, eigenvalue recursion, projectors, whitening
detect    receive pipeline, linear and joint ML detection, BER
analysis  mutual information, outage probability and its bounds
cli       batch experiment runner
"""

__version__ = "0.1.0"

from .errors import (DegenerateChannelError, DomainError, QstbcError,
                     StructuralViolation, UsageError)

__all__ = ["__version__", "QstbcError", "UsageError", "DomainError",
           "StructuralViolation", "DegenerateChannelError"]
