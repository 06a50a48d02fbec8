"""Desk-scale workflow for binary classification under domain shift:
self-distillation pretraining, frozen-backbone linear probing, and budgeted
active-adaptation rounds scored by area under the precision-recall curve.
"""

__version__ = "0.1.0"
