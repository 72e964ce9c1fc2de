"""Numerical laboratory for the conformally flat Yamabe flow.

Computes steady and shrinking soliton profiles of the fast-diffusion
equation u_t = (n-1)/m * lap(u^m), m = (n-2)/(n+2), verifies their tail
asymptotics, evolves the radial PDE (exact and rescaled forms), certifies
barrier constructions, and classifies curvature blow-up as type I / II.
"""

__version__ = "0.1.0"
