"""spikelab: numerical laboratory for planar Lane-Emden spike asymptotics.

Solves -Δu = u^p with zero Dirichlet data on level-set domains, computes
Green/Robin/Kirchhoff-Routh structure, the Liouville bubble and its 1/p
correction, local Pohozaev quadratic forms, and the bottom spectrum of the
linearized operator.
"""

__version__ = "0.1.0"
