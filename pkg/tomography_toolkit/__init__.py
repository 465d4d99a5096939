"""
Quantum Tomography Toolkit

Designs, audits, simulates and statistically evaluates quantum state and process
tomography protocols: completeness of the measurement matrix, chi-square adequacy
of the fitted model, and fidelity with its loss-of-fidelity distribution.
"""
