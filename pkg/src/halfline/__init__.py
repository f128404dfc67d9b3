"""One-sided harmonic analysis on the half-line."""
