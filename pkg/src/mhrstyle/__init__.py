"""Per-player style vectors over multi-head routed low-rank adapters.

A shared behavioral-cloning policy for a small two-player grid game is
specialised to individual players through a routing tensor whose rows
(style vectors) mix an inventory of low-rank adapters. The rows support
identification, steering, interpolation and merging of playing styles.
"""

__version__ = "0.1.0"
