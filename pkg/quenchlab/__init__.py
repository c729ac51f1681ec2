"""
Quench Lab
==========
Quenching-time estimation, certificates and time-optimal control search
for planar systems driven to a singular set.
"""

__version__ = "1.0.0"
