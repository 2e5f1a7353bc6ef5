"""Desk-scale WiFi-CSI fall detection pipeline.

Synthetic channel simulation, dynamics extraction and fall-like
segmentation, a variational convolutional autoencoder scored by
reconstruction error, a self-updating online detection loop with human
verdict feedback, and an HTTP gateway tying it together.
"""

__version__ = "0.1.0"
