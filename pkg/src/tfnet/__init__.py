"""Temporal-fusion object detection toolkit.

Detects objects on the last frame of a short image sequence using a
slow-fusion 3D convolutional backbone and an anchor-based detection head,
with the full surrounding toolchain: anchor clustering, data pipeline,
training, average-precision evaluation, and architecture profiling.
"""

__version__ = "0.1.0"
