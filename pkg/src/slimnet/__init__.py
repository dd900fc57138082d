"""Dynamically slimmable networks at desk scale.

Width-sliceable layers over a numpy tape, double-headed width gates, the
two-stage training recipe (supernet bootstrapping, then gate training with
difficulty-derived targets), and a latency benchmark comparing channel
slicing against masking and indexing.
"""

__version__ = "0.1.0"
