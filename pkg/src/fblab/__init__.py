"""Discrete free boundary minimal and CMC surfaces in convex bodies, with
certificates for boundary-length and area bounds."""

__version__ = "0.1.0"
