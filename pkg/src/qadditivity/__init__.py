"""Numerical tools for additivity questions about quantum channels.

Estimators for minimum output entropy, (constrained) Holevo capacity and
entanglement of formation, the channel/state correspondence between the last
two, the linear-programming dual of the constrained capacity, gadget channels
and an experiment harness.
"""

__version__ = "0.1.0"
