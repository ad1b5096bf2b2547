"""Branching pipe flows between parallel walls.

Constructs the self-similar divergence-free pipe networks and companion
scalar fields, evaluates the variational lower bound on wall-to-wall heat
transport, and verifies the constructive identities and kernel estimates
numerically.
"""

__version__ = "0.1.0"
