"""
Core modules for CoSeg: configuration, errors, metrics, training
"""

__version__ = "1.0.0"
__author__ = "CoSeg Team"
