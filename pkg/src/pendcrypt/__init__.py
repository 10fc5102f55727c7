"""Encrypted visual-servo pendulum lab.

A desk-scale reproduction of a secure networked pendulum vision loop:
chaotic image cipher, attack injectors, security metrics, synthetic camera
and state extraction, an uncertain multi-delay closed-loop simulator, and
a linear-matrix-inequality stability certificate checker.
"""

__version__ = "0.1.0"
