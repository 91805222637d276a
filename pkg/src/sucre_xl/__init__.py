"""Monte Carlo simulator of SUCRe-XL grant-based random access for XL-MIMO arrays."""

__version__ = "0.1.0"
