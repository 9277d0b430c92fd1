"""Lifelong learning of shared linear representations.

Simulator for streams of linear-classification tasks drawn from a hidden
low-dimensional subspace, with a budget-accounted lifelong learner, an
SDP-based representation refinement step with rounding certificates, and
an adversarial lower-bound harness.
"""

__version__ = "0.1.0"
