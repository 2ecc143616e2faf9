"""Simulation and analysis suite for an autonomous rotor heat engine.

Subsystems
----------
params       engine parameterization and closed-form performance predictions
classical    seeded Monte Carlo integration of the classical Ito dynamics
observables  circular statistics, two-time correlations, powers, PV cycles
quantum      truncated Hilbert space, Lindblad evolution, jump unraveling
config, cli  experiment configuration and orchestration
kernels      compiled / pure-python time-stepping backends
"""

__version__ = "0.1.0"
