"""hexair: multi-aircraft traffic coordination on a hexagonal-cell airspace.

Simulates and statistically compares three conflict detection & resolution
methods over large combinatorial scenario sets: stand-alone detect-and-avoid,
exact strategic cell allocation, and collaborative peer-to-peer cell
reservation.
"""

__version__ = "0.1.0"
