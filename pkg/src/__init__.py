"""
Safe Rejuvenation Toolkit

Timing synthesis for software-rejuvenation control of cyber-physical
systems, with a nonlinear quadrotor testbed for validation.

Author: Safe Rejuvenation Toolkit developers
Version: 1.0.1
"""

__version__ = "1.0.1"
