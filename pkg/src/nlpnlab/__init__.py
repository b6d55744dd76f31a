"""Desk-scale laboratory for correlated nonlinear phase noise (NLPN) in
multi-subcarrier coherent fiber links.

Subpackages cover the full chain: constellation construction and shaping,
waveform assembly, split-step fiber propagation, the analytic NLPN
covariance model with its Monte-Carlo oracle, receiver DSP and phase-noise
measurement, RLS phase equalization, and the experiment harness.
"""

__version__ = "0.1.0"
