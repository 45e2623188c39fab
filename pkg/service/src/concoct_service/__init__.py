"""Trainer and HTTP service for the pairwise concreteness model.

The service consumes training pairs in the JSONL format the outline
package's dataset pipeline emits and serves the /compare contract its
engine consumes; nothing else crosses the package boundary.
"""

__version__ = "0.1.0"
