"""Boolean functions under random restrictions.

Fourier analysis on the cube, random-restriction experiments, the uniform,
conditioned and controlled revelation processes, block sensitivity and
decision-tree depth, and a hypercontractive inequality for the revelation
process, with exact oracles at small arity.
"""
from .core import *  # noqa: F401,F403
from .core import max_influence  # noqa: F401

__version__ = "0.1.0"
