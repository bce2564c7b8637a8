"""Variance scaling of linear SPDEs driven by red (Ornstein-Uhlenbeck) noise.

Simulates four test systems near loss of stability, estimates the stationary
variance along probing functions and compares the growth rates with exact
stationary laws.
"""

__version__ = "0.1.0"
