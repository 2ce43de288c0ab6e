"""ctirag: an evaluation harness comparing four retrieval architectures
(semantic RAG, GraphRAG, agentic GraphRAG, hybrid graph+text RAG) for
cyber-threat-intelligence question answering.

Runs entirely offline against a deterministic scripted mock, or against any
OpenAI-compatible endpoint.
"""

__version__ = "0.1.0"
