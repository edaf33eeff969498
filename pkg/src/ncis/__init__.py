"""Desk-scale adversarial purification laboratory.

Implements iterative Gaussian smoothing, blind-spot network purifiers and
their additive combination (NCIS), the PGD/FGSM/BPDA attack surface, noise
statistics, and a reproducible evaluation harness, all on a deterministic
synthetic image classification task.
"""

__version__ = "0.1.0"
