"""
CAAT Desk Lab

Cross-attention co-training attack against a small text-conditioned diffusion
model, with baseline attacks, fine-tuning harnesses and efficacy metrics.
"""

__version__ = "1.0.0"
__author__ = "CAAT Desk Lab Team"
