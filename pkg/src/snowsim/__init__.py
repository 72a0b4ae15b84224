"""Sampling-based consensus protocols in a deterministic adversarial simulator.

The package bundles three protocol state machines (a lockstep binary
agreement protocol, its partially-synchronous variant with locks, and the
chain-replication protocol built on top of it), an exact rational binomial
oracle for checking the security bounds behind the default parameters, a
discrete-event network simulator with pluggable Byzantine strategies, and
a trace observer that recomputes global safety properties after the fact.
"""

from snowsim.params import ProtocolParams, ValidationReport, validate_params

__all__ = ["ProtocolParams", "ValidationReport", "validate_params"]
