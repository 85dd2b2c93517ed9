"""Fitted value iteration over two-layer ReLU value surrogates, with a
multi-cut decomposition engine for integer-vector action selection and a
multi-facility capacity-investment benchmark."""

__version__ = "0.1.0"
