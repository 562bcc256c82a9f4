"""Remote referring-expression grounding on synthetic topological worlds."""

__version__ = "0.1.0"
