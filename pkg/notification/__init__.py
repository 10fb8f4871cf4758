"""
Notification modules for CoSeg
"""

__all__ = ['TrainingNotifier']
