"""Constrained imitation learning for 2D mobile robots.

Behavior cloning whose output is completed through discrete robot dynamics
and corrected toward the feasible set by penalty-gradient steps, plus the
simulator, expert, baselines and evaluation harness around it.
"""

__version__ = "0.1.0"
