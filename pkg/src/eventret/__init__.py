"""Event-aware dense retrieval: a query/event fused tower, a document tower and their tooling."""

__version__ = "0.1.0"
