"""Activity sensing from massive-MIMO channel tensors.

Pipeline: simulate received channel tensors under five activity
classes, compress each time window into CP-weight feature vectors via
correlation tensors, and classify with a small feedforward network.
"""

__version__ = "0.1.0"
