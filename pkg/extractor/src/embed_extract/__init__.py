"""Offline contextual-vector extraction.

Runs a locally available language model over a JSON-lines corpus and writes
one record per token occurrence with that token's vector at every model
layer, in the store format the classifier consumes.
"""

__version__ = "0.1.0"
