"""Atomic multicast lab: FlexCast, Skeen and a hierarchical baseline on a simulated WAN."""

__version__ = "0.1.0"
