"""Drug supply chain game: simulation engine, session service, and behavioral analysis pipeline."""

__version__ = "0.1.0"
