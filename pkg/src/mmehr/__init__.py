"""Multimodal EHR benchmarking: ingest, fuse, evaluate, and probe ICU
stay-level outcome models from one config file."""

__version__ = "0.1.0"
