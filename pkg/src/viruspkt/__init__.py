"""viruspkt: self-hosted document ingestion and keyword search service."""

__version__ = "0.1.0"
