"""Simulation of a displacement-coupled transmon and nanomechanical
resonator: device parameters, Ramsey grating protocol, decoherence channels
and phase-space analysis."""

__version__ = "0.1.0"
