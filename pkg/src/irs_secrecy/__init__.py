"""Numerical toolkit for secrecy analysis of reflecting-surface-aided MIMO
wiretap channels.

Closed-form ergodic secrecy rates and secrecy outage probabilities are
computed from random-matrix deterministic equivalents (fixed-point systems)
and central-limit covariances, validated against a Monte-Carlo channel
oracle, and optimized over transmit covariances and surface phase shifts.
"""

__version__ = "0.1.0"
