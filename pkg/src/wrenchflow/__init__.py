"""Whole-body external contact wrench estimation for a planar floating-base
robot: physics simulation and data generation, analytical observers (momentum
observer, contact particle filter), an MLP regressor, and a conditional
flow-matching estimator, with a shared evaluation suite and CLI."""

__version__ = "0.1.0"
