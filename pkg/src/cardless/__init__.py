"""Cardless virtual-card payment system.

Card numbers with Luhn check digits, an additively homomorphic vault for
encrypted spend accumulation, a logistic-regression fraud scorer, a sealed
presentation-token codec, the multi-actor payment protocol engine, an HTTP
gateway with a human-approval loop, and a deterministic simulator.
"""

__version__ = "0.1.0"
