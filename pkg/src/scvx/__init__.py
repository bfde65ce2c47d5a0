"""Successive convexification for non-convex optimal control."""
