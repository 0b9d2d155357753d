"""Day-ahead market clearing with binary commitments.

Two clearing models share one data layer: social-welfare maximisation with
two-step pricing, and a minimum-total-opportunity-cost model that minimises
the sum of per-firm duality gaps.
"""
from __future__ import annotations

__version__ = "0.1.0"
