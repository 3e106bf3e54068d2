"""Whole-body contact-force control stack for planar legged robots."""

__version__ = "0.1.0"
