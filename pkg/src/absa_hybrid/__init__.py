"""Hybrid aspect-based sentiment classification.

A rule-based sentiment ontology predicts target polarity first; whenever it
is inconclusive (conflicting hits or no hits) a multi-hop rotatory-attention
neural network serves as backup.
"""

__version__ = "0.1.0"
