"""Frozen numerical defaults.

DEFAULT_TAU is the RBT penalty solved for DEFAULT_PD; regenerate with
``python scripts/derive_tau.py`` after touching the metrics module.
"""

# Bound-holding probability target used throughout the defaults.
DEFAULT_PD = 0.9973

# Violation penalty making the 3-sigma-style ideal bound stationary for
# DEFAULT_PD; derived by scripts/derive_tau.py.
DEFAULT_TAU = 2881.921892579702

# 95th percentile of chi-square with 3 dof: default robust-loss threshold
# on the per-feature weighted squared error.
CHI2_3DOF_95 = 7.814727903251179
