"""AdaNCA: neural cellular automata adaptors for Vision Transformers."""

__version__ = "0.1.0"
