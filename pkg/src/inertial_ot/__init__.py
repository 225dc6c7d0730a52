"""Indexed-domain inertial tracking with optimal-transport domain adaptation.

Modules
-------
sim       planar robot kinematics and IMU simulation for offset-indexed domains
ot        exact 1-D Wasserstein, log-domain Sinkhorn, debiased divergence
tracker   CNN + LSTM displacement regressor with hand-written backprop
adapt     supervised training and DeepJDOT-style OT adaptation
baseline  complementary-filter heading plus double integration
evaluate  error metrics and cross-domain shift/error matrices
io        dataset persistence
cli       command-line pipeline (``python -m inertial_ot``)
"""

__version__ = "0.1.0"
