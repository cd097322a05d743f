"""Simulation and verification toolkit for open quantum random walks and
open quantum Brownian motion.

Subpackage map:

- ``linalg``: dense Hermitian/PSD utilities, partial traces, exponentials
- ``channels``: Kraus/Stinespring channels, projective and pointer measurement
- ``oqw``: open quantum walks on finite graphs, trajectory sampling
- ``discrete``: the discrete Brownian dynamics, its dilations, toy Fock register
- ``belavkin``: diffusive trajectory SDE, unnormalized form, change of measure
- ``lindblad``: the continuum generator, density/field/kernel PDE solvers
- ``nondemolition``: commuting measurement families and unraveling consistency
- ``experiments`` / ``cli``: reproducible experiment harness and command line
"""

__version__ = "0.1.0"
