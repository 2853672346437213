"""Neural stay encoders behind the embedding-manifest adapter contract."""

__version__ = "0.1.0"
