"""
SHADOWLAB
Pseudo-orbit shadowing on dendrites, hyperspaces of continua and
hyperbolic toral automorphisms, computed at finite scale.
"""

__version__ = "1.0.0"
