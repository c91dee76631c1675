"""
altprop: alternating feature-enhanced label propagation for semi-supervised node classification.
"""

__version__ = "1.0.0"
