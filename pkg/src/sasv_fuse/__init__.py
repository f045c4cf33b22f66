"""
sasv_fuse: embedding- and score-level fusion for spoofing-aware speaker
verification.
"""

__version__ = "0.1.0"
