"""RIS-aided single-frequency 3D radio imaging: forward model synthesis,
multi-view scene generation, sparse reconstruction, codebook optimization,
and the Monte Carlo experiment harness."""

__version__ = "0.1.0"
