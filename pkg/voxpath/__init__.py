"""voxpath - pathological voice classification from sustained-vowel recordings."""

__version__ = "1.0.0"
