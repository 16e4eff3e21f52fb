"""Quantized maps on the 2-torus: classical dynamics, quantization, symbolic measures and entropy bounds."""

__version__ = "0.1.0"
