"""Global numerical tolerance record.

Every validation routine in the package reads its thresholds from the
module-level ``TOL`` instance so that all tolerances can be adjusted in
one place (e.g. loosened for float32 experiments or tightened in tests).
"""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass
class Tolerances:
    hermiticity: float = 1e-12        # max |rho - rho*| entry for density matrices
    psd: float = -1e-10               # smallest admissible eigenvalue
    unit_trace: float = 1e-10         # |Tr rho - 1|
    unitarity: float = 1e-10          # |V V* - I| for dilation unitaries
    completeness: float = 1e-10       # |sum K*K - I| for Kraus families / kernels
    projector_resolution: float = 1e-10
    null_outcome: float = 1e-14       # outcome probabilities below this are null
    state_norm: float = 1e-10         # toy-Fock register normalization
    field_mass: float = 1e-8          # lattice field: trace + leak vs 1
    diag_mass: float = 1e-9           # diagonal OQW state: summed trace vs 1
    sde_trace: float = 1e-8           # stored SDE path states: |Tr - 1|
    collapse: float = 1e-12           # trace below this aborts a trajectory
    pde_mass: float = 1e-6            # Q-field mass conservation (with leak)
    nondemolition: float = 1e-10      # commutator / factorization certificates

    def scaled(self, factor: float) -> "Tolerances":
        """Return a copy with every threshold multiplied by ``factor``."""
        vals = {k: getattr(self, k) * factor for k in self.__dataclass_fields__}
        return replace(self, **vals)


TOL = Tolerances()
