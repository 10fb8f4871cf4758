"""
Utility modules for CoSeg
"""

__all__ = ['DependencyChecker']
