"""Cross-lingual and environment-agnostic representation learning for instruction-following navigation."""
__version__ = "0.1.0"
